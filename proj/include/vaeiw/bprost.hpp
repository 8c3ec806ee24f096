#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "vaeiw/features.hpp"

namespace vaeiw::bprost {

/// Tiling of a palette screen. The Atari reference instance splits the
/// 210 x 160 screen into 14 rows x 16 columns of 15 x 10 pixel tiles, 128 colors.
struct Config {
    int tiles_x = 6;
    int tiles_y = 6;
    int tile_w = 5;
    int tile_h = 5;
    int palette = 8;

    static Config atari() { return {16, 14, 10, 15, 128}; }
    /// Tiles of tile_w x tile_h covering `screen` exactly; throws otherwise.
    static Config for_screen(const Screen& screen, int tile_w, int tile_h);

    int tiles() const { return tiles_x * tiles_y; }
    /// Number of relative tile displacements (dy, dx).
    std::uint64_t offsets() const {
        return static_cast<std::uint64_t>(2 * tiles_y - 1) * static_cast<std::uint64_t>(2 * tiles_x - 1);
    }
    void validate() const;
};

struct Counts {
    std::uint64_t basic = 0;
    std::uint64_t pros = 0;
    std::uint64_t prot = 0;
    std::uint64_t total = 0;
};

/// basic = T*C, pros = (O*C^2 + C)/2, prot = O*C^2 with T tiles, O offsets.
Counts count(const Config& cfg);

/// Parameter tuples behind each dense id block.
struct BasicTuple {
    int ty, tx, c;
    bool operator==(const BasicTuple&) const = default;
};
struct PairTuple {
    int dy, dx, c0, c1;
    bool operator==(const PairTuple&) const = default;
    auto operator<=>(const PairTuple&) const = default;
};

enum class Block { basic, pros, prot };

// Dense id layout: [0, basic) Basic, [basic, basic+pros) B-PROS,
// [basic+pros, total) B-PROT.
//   basic id = (ty * tiles_x + tx) * C + c
//   pair index u = (o * C + c0) * C + c1 with
//       o = (dy + tiles_y - 1) * (2 * tiles_x - 1) + (dx + tiles_x - 1)
//   prot id = basic + pros + u
//   pros: the tuple (dy, dx, c0, c1) is identified with (-dy, -dx, c1, c0) and
//   represented by the lexicographically smaller of the two. Canonical tuples
//   with o below the center offset m = (O - 1) / 2 are numbered by u; the ones
//   at o = m (zero offset, c0 <= c1) follow in row-major upper-triangle order.
FeatureId encode_basic(const Config& cfg, BasicTuple t);
FeatureId encode_pros(const Config& cfg, PairTuple t);
FeatureId encode_prot(const Config& cfg, PairTuple t);

/// Canonical representative of a B-PROS tuple.
PairTuple canonical_pros(PairTuple t);

/// Inverse of the encoders; B-PROS ids decode to their canonical tuple.
/// Basic ids come back as {ty, tx, c, c}.
std::pair<Block, PairTuple> decode(const Config& cfg, FeatureId id);
BasicTuple decode_basic(const Config& cfg, FeatureId id);

/// Basic block: (tile, color) present anywhere in the tile.
FeatureSet basic_features(const Screen& screen, const Config& cfg);
/// B-PROS block from a basic set, including self pairs.
FeatureSet pros_features(const FeatureSet& basic_now, const Config& cfg);
/// B-PROT block, directed from the previous decision point to this one.
FeatureSet prot_features(const FeatureSet& basic_prev, const FeatureSet& basic_now, const Config& cfg);

struct ExtractResult {
    FeatureSet features;  ///< union of the three blocks
    FeatureSet basic;     ///< this frame's basic set, to thread into the next call
};

ExtractResult extract(const Screen& screen, const FeatureSet* prev_basic, const Config& cfg);

class Extractor final : public FeatureExtractor {
public:
    explicit Extractor(Config cfg);

    FeatureSpace space() const override;
    Extraction extract(const Screen& screen, const FeatureSet& prev_carry) const override;
    const Config& config() const { return cfg_; }

private:
    Config cfg_;
};

}  // namespace vaeiw::bprost
