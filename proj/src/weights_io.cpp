#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "vaeiw/neural.hpp"

namespace vaeiw::neural {

namespace {

using nlohmann::json;

constexpr std::array<char, 6> kMagic = {'V', 'A', 'E', 'I', 'W', '\0'};

template <typename T>
void put_le(std::vector<std::byte>& out, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::span<const std::byte> take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw FormatError("weight file truncated");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename T>
    T get_le() {
        auto s = take(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(std::to_integer<unsigned>(s[i])) << (8 * i);
        return static_cast<T>(u);
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::byte> s) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < s.size()) {
        const std::size_t n = std::min<std::size_t>(s.size() - off, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(s.data() + off), static_cast<uInt>(n));
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

json layer_to_json(const Layer& l) {
    json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::conv_transpose:
            j["name"] = l.name;
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = {l.kernel_h, l.kernel_w};
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["bias"] = l.bias;
            break;
        case LayerKind::batchnorm:
            j["name"] = l.name;
            j["channels"] = l.out_channels;
            j["epsilon"] = l.epsilon;
            break;
        case LayerKind::leaky_relu: j["slope"] = l.slope; break;
        case LayerKind::dropout: j["p"] = l.dropout; break;
        default: break;
    }
    return j;
}

Layer layer_from_json(const json& j) {
    Layer l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::conv_transpose:
            l.name = j.at("name").get<std::string>();
            l.in_channels = j.at("in_channels").get<int>();
            l.out_channels = j.at("out_channels").get<int>();
            l.kernel_h = j.at("kernel").at(0).get<int>();
            l.kernel_w = j.at("kernel").at(1).get<int>();
            l.stride = j.value("stride", 1);
            l.padding = j.value("padding", 0);
            l.bias = j.value("bias", true);
            break;
        case LayerKind::batchnorm:
            l.name = j.at("name").get<std::string>();
            l.out_channels = j.at("channels").get<int>();
            l.in_channels = l.out_channels;
            l.epsilon = j.at("epsilon").get<float>();
            break;
        case LayerKind::leaky_relu: l.slope = j.value("slope", 0.01f); break;
        case LayerKind::dropout: l.dropout = j.value("p", 0.0f); break;
        default: break;
    }
    return l;
}

json manifest_of(const EncoderWeights& w) {
    json layers = json::array();
    for (const Layer& l : w.layers) layers.push_back(layer_to_json(l));
    json tensors = json::array();
    for (const Tensor& t : w.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    return {
        {"format", "vaeiw-encoder"},
        {"input", {{"channels", w.input.channels}, {"height", w.input.height}, {"width", w.input.width}}},
        {"model_kind", w.model_kind == ModelKind::gaussian ? "gaussian" : "bernoulli"},
        {"latent_spec", {w.latent.height, w.latent.width, w.latent.channels}},
        {"feature_layout", w.feature_layout},
        {"lambda", w.lambda},
        {"layers", layers},
        {"tensors", tensors},
    };
}

}  // namespace

std::vector<std::byte> serialize_weights(const EncoderWeights& w) {
    std::vector<std::byte> out;
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    put_le<std::uint16_t>(out, kFormatVersion);

    const std::string manifest = manifest_of(w).dump();
    put_le<std::uint64_t>(out, manifest.size());
    for (char c : manifest) out.push_back(static_cast<std::byte>(c));

    const std::size_t blob_start = out.size();
    for (const Tensor& t : w.tensors) {
        put_le<std::uint64_t>(out, t.data.size() * sizeof(float));
        for (float v : t.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    const std::uint32_t crc = crc32_of(std::span(out).subspan(blob_start));
    put_le<std::uint32_t>(out, crc);
    return out;
}

EncoderWeights parse_weights(std::span<const std::byte> bytes) {
    Reader r(bytes);
    auto magic = r.take(kMagic.size());
    if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) throw FormatError("bad magic: not a VAEIW weight file");
    const auto version = r.get_le<std::uint16_t>();
    if (version != kFormatVersion)
        throw FormatError("unsupported weight format version " + std::to_string(version));

    const auto manifest_len = r.get_le<std::uint64_t>();
    auto manifest_bytes = r.take(manifest_len);
    json m;
    try {
        m = json::parse(std::string(reinterpret_cast<const char*>(manifest_bytes.data()), manifest_bytes.size()));
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }

    EncoderWeights w;
    try {
        if (m.value("format", std::string{}) != "vaeiw-encoder") throw FormatError("manifest format tag missing");
        const json& in = m.at("input");
        w.input = {in.at("channels").get<int>(), in.at("height").get<int>(), in.at("width").get<int>()};
        const std::string kind = m.at("model_kind").get<std::string>();
        if (kind == "bernoulli")
            w.model_kind = ModelKind::bernoulli;
        else if (kind == "gaussian")
            w.model_kind = ModelKind::gaussian;
        else
            throw FormatError("unknown model kind: " + kind);
        const json& ls = m.at("latent_spec");
        w.latent = {ls.at(0).get<int>(), ls.at(1).get<int>(), ls.at(2).get<int>()};
        w.feature_layout = m.value("feature_layout", std::string{"hwc"});
        w.lambda = m.value("lambda", 0.9);
        for (const json& l : m.at("layers")) w.layers.push_back(layer_from_json(l));
        for (const json& t : m.at("tensors"))
            w.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::int64_t>>(), {}});
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }

    const std::size_t blob_start = r.pos();
    for (Tensor& t : w.tensors) {
        const auto len = r.get_le<std::uint64_t>();
        if (len % sizeof(float) != 0) throw FormatError("tensor " + t.name + " byte length is not a multiple of 4");
        if (len / sizeof(float) != static_cast<std::uint64_t>(t.numel()))
            throw ShapeError("tensor " + t.name + " holds " + std::to_string(len / sizeof(float)) +
                             " values but its shape needs " + std::to_string(t.numel()));
        t.data.resize(len / sizeof(float));
        for (float& v : t.data) v = std::bit_cast<float>(r.get_le<std::uint32_t>());
    }
    const std::size_t blob_end = r.pos();
    const auto stored_crc = r.get_le<std::uint32_t>();
    if (r.remaining() != 0) throw FormatError("trailing bytes after checksum");
    if (crc32_of(bytes.subspan(blob_start, blob_end - blob_start)) != stored_crc)
        throw FormatError("checksum mismatch: weight file is corrupt");

    w.validate();
    return w;
}

EncoderWeights load_weights(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open weight file " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_weights(std::as_bytes(std::span(raw)));
}

void save_weights(const EncoderWeights& w, const std::filesystem::path& path) {
    const auto bytes = serialize_weights(w);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write weight file " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing weight file " + path.string());
}

}  // namespace vaeiw::neural
