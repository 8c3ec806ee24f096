#include "vaeiw/bprost.hpp"

#include <bitset>
#include <stdexcept>
#include <string>

namespace vaeiw::bprost {

void Config::validate() const {
    if (tiles_x < 1 || tiles_y < 1 || tile_w < 1 || tile_h < 1)
        throw std::invalid_argument("bprost: tile counts and sizes must be positive");
    if (palette < 1 || palette > 256) throw std::invalid_argument("bprost: palette must be in [1, 256]");
    if (count(*this).total > std::uint64_t{1} << 32)
        throw std::invalid_argument("bprost: feature space exceeds 32-bit ids");
}

Config Config::for_screen(const Screen& screen, int tile_w, int tile_h) {
    if (tile_w < 1 || tile_h < 1 || screen.width % tile_w != 0 || screen.height % tile_h != 0)
        throw std::invalid_argument("bprost: screen " + std::to_string(screen.width) + "x" +
                                    std::to_string(screen.height) + " is not divisible into " +
                                    std::to_string(tile_w) + "x" + std::to_string(tile_h) + " tiles");
    Config cfg{screen.width / tile_w, screen.height / tile_h, tile_w, tile_h, screen.palette_size};
    cfg.validate();
    return cfg;
}

Counts count(const Config& cfg) {
    const std::uint64_t c = static_cast<std::uint64_t>(cfg.palette);
    const std::uint64_t o = cfg.offsets();
    Counts n;
    n.basic = static_cast<std::uint64_t>(cfg.tiles()) * c;
    n.pros = (o * c * c + c) / 2;
    n.prot = o * c * c;
    n.total = n.basic + n.pros + n.prot;
    return n;
}

namespace {

std::uint64_t offset_index(const Config& cfg, int dy, int dx) {
    if (dy <= -cfg.tiles_y || dy >= cfg.tiles_y || dx <= -cfg.tiles_x || dx >= cfg.tiles_x)
        throw std::out_of_range("bprost: tile offset out of range");
    return static_cast<std::uint64_t>(dy + cfg.tiles_y - 1) * (2 * cfg.tiles_x - 1) + (dx + cfg.tiles_x - 1);
}

std::uint64_t pair_index(const Config& cfg, const PairTuple& t) {
    if (t.c0 < 0 || t.c1 < 0 || t.c0 >= cfg.palette || t.c1 >= cfg.palette)
        throw std::out_of_range("bprost: color out of range");
    const std::uint64_t c = cfg.palette;
    return (offset_index(cfg, t.dy, t.dx) * c + t.c0) * c + t.c1;
}

PairTuple pair_from_index(const Config& cfg, std::uint64_t u) {
    const std::uint64_t c = cfg.palette;
    const auto c1 = static_cast<int>(u % c);
    const auto c0 = static_cast<int>((u / c) % c);
    const std::uint64_t o = u / (c * c);
    const auto span_x = static_cast<std::uint64_t>(2 * cfg.tiles_x - 1);
    const int dy = static_cast<int>(o / span_x) - (cfg.tiles_y - 1);
    const int dx = static_cast<int>(o % span_x) - (cfg.tiles_x - 1);
    return {dy, dx, c0, c1};
}

std::uint64_t triangle_row_start(std::uint64_t row, std::uint64_t c) { return row * c - row * (row - 1) / 2; }

}  // namespace

FeatureId encode_basic(const Config& cfg, BasicTuple t) {
    if (t.ty < 0 || t.tx < 0 || t.ty >= cfg.tiles_y || t.tx >= cfg.tiles_x || t.c < 0 || t.c >= cfg.palette)
        throw std::out_of_range("bprost: basic tuple out of range");
    return static_cast<FeatureId>((static_cast<std::uint64_t>(t.ty) * cfg.tiles_x + t.tx) * cfg.palette + t.c);
}

PairTuple canonical_pros(PairTuple t) {
    PairTuple mirrored{-t.dy, -t.dx, t.c1, t.c0};
    return mirrored < t ? mirrored : t;
}

FeatureId encode_pros(const Config& cfg, PairTuple t) {
    const Counts n = count(cfg);
    const std::uint64_t c = cfg.palette;
    const std::uint64_t center = (cfg.offsets() - 1) / 2;
    const PairTuple k = canonical_pros(t);
    const std::uint64_t u = pair_index(cfg, k);
    std::uint64_t local;
    if (u < center * c * c) {
        local = u;
    } else {
        // zero offset with c0 <= c1
        local = center * c * c + triangle_row_start(k.c0, c) + (k.c1 - k.c0);
    }
    return static_cast<FeatureId>(n.basic + local);
}

FeatureId encode_prot(const Config& cfg, PairTuple t) {
    const Counts n = count(cfg);
    return static_cast<FeatureId>(n.basic + n.pros + pair_index(cfg, t));
}

BasicTuple decode_basic(const Config& cfg, FeatureId id) {
    if (id >= count(cfg).basic) throw std::out_of_range("bprost: not a basic id");
    const int c = static_cast<int>(id % cfg.palette);
    const int tile = static_cast<int>(id / cfg.palette);
    return {tile / cfg.tiles_x, tile % cfg.tiles_x, c};
}

std::pair<Block, PairTuple> decode(const Config& cfg, FeatureId id) {
    const Counts n = count(cfg);
    if (id < n.basic) {
        const BasicTuple b = decode_basic(cfg, id);
        return {Block::basic, {b.ty, b.tx, b.c, b.c}};
    }
    if (id < n.basic + n.pros) {
        const std::uint64_t c = cfg.palette;
        const std::uint64_t center = (cfg.offsets() - 1) / 2;
        const std::uint64_t local = id - n.basic;
        if (local < center * c * c) return {Block::pros, pair_from_index(cfg, local)};
        std::uint64_t r = local - center * c * c;
        std::uint64_t c0 = 0;
        while (r >= c - c0) {
            r -= c - c0;
            ++c0;
        }
        return {Block::pros, {0, 0, static_cast<int>(c0), static_cast<int>(c0 + r)}};
    }
    if (id < n.total) return {Block::prot, pair_from_index(cfg, id - n.basic - n.pros)};
    throw std::out_of_range("bprost: id outside feature space");
}

FeatureSet basic_features(const Screen& screen, const Config& cfg) {
    if (screen.width != cfg.tiles_x * cfg.tile_w || screen.height != cfg.tiles_y * cfg.tile_h)
        throw std::invalid_argument("bprost: screen dimensions do not match the tiling");
    if (screen.palette_size > cfg.palette) throw std::invalid_argument("bprost: screen palette larger than config");

    std::vector<FeatureId> ids;
    std::bitset<256> present;
    for (int ty = 0; ty < cfg.tiles_y; ++ty) {
        for (int tx = 0; tx < cfg.tiles_x; ++tx) {
            present.reset();
            for (int y = ty * cfg.tile_h; y < (ty + 1) * cfg.tile_h; ++y)
                for (int x = tx * cfg.tile_w; x < (tx + 1) * cfg.tile_w; ++x) present.set(screen.at(x, y));
            for (int c = 0; c < cfg.palette; ++c)
                if (present.test(c)) ids.push_back(encode_basic(cfg, {ty, tx, c}));
        }
    }
    return FeatureSet::from_sorted(std::move(ids));
}

FeatureSet pros_features(const FeatureSet& basic_now, const Config& cfg) {
    std::vector<BasicTuple> b;
    b.reserve(basic_now.size());
    for (FeatureId id : basic_now) b.push_back(decode_basic(cfg, id));

    std::vector<FeatureId> ids;
    ids.reserve(b.size() * (b.size() + 1) / 2);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = i; j < b.size(); ++j)
            ids.push_back(encode_pros(cfg, {b[j].ty - b[i].ty, b[j].tx - b[i].tx, b[i].c, b[j].c}));
    return FeatureSet::from_unsorted(std::move(ids));
}

FeatureSet prot_features(const FeatureSet& basic_prev, const FeatureSet& basic_now, const Config& cfg) {
    std::vector<BasicTuple> now;
    now.reserve(basic_now.size());
    for (FeatureId id : basic_now) now.push_back(decode_basic(cfg, id));

    std::vector<FeatureId> ids;
    ids.reserve(basic_prev.size() * now.size());
    for (FeatureId pid : basic_prev) {
        const BasicTuple p = decode_basic(cfg, pid);
        for (const BasicTuple& n : now) ids.push_back(encode_prot(cfg, {n.ty - p.ty, n.tx - p.tx, p.c, n.c}));
    }
    return FeatureSet::from_unsorted(std::move(ids));
}

ExtractResult extract(const Screen& screen, const FeatureSet* prev_basic, const Config& cfg) {
    FeatureSet basic = basic_features(screen, cfg);
    FeatureSet pros = pros_features(basic, cfg);
    FeatureSet prot = prev_basic ? prot_features(*prev_basic, basic, cfg) : FeatureSet{};

    // The three blocks occupy disjoint, ordered id ranges, so concatenation
    // stays sorted.
    std::vector<FeatureId> all;
    all.reserve(basic.size() + pros.size() + prot.size());
    all.insert(all.end(), basic.begin(), basic.end());
    all.insert(all.end(), pros.begin(), pros.end());
    all.insert(all.end(), prot.begin(), prot.end());
    return {FeatureSet::from_sorted(std::move(all)), std::move(basic)};
}

Extractor::Extractor(Config cfg) : cfg_(cfg) { cfg_.validate(); }

FeatureSpace Extractor::space() const { return {count(cfg_).total, FeatureBackend::bprost}; }

Extraction Extractor::extract(const Screen& screen, const FeatureSet& prev_carry) const {
    auto r = bprost::extract(screen, prev_carry.empty() ? nullptr : &prev_carry, cfg_);
    return {std::move(r.features), std::move(r.basic)};
}

}  // namespace vaeiw::bprost
