#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "vaeiw/neural.hpp"
#include "vaeiw/random.hpp"
#include "vaeiw/sim.hpp"

using namespace vaeiw;
using namespace vaeiw::neural;

namespace {

std::vector<float> uniform(Rng& rng, std::size_t n, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

GrayImage image_of(Rng& rng, int h, int w) { return {h, w, uniform(rng, static_cast<std::size_t>(h) * w, 0.0f, 1.0f)}; }

Layer conv_layer(const std::string& name, int in, int out, int k, int stride = 1, int pad = 0, bool bias = true) {
    Layer l;
    l.kind = LayerKind::conv;
    l.name = name;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_h = l.kernel_w = k;
    l.stride = stride;
    l.padding = pad;
    l.bias = bias;
    return l;
}

Layer simple(LayerKind kind) {
    Layer l;
    l.kind = kind;
    return l;
}

LatentMap latent(int h, int w, int c, std::vector<float> values) { return {{h, w, c}, std::move(values)}; }

// Bitwise CRC-32 (IEEE, reflected), written out longhand.
std::uint32_t crc32_ref(const std::byte* p, std::size_t n) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) {
        crc ^= static_cast<std::uint8_t>(p[i]);
        for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

template <class T>
T read_le(const std::vector<std::byte>& b, std::size_t off) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[off + i])) << (8 * i);
    return static_cast<T>(v);
}

// A small encoder touching every layer kind used at inference time.
EncoderWeights residual_net(Rng& rng) {
    EncoderWeights w;
    w.input = {1, 12, 12};
    Layer bn;
    bn.kind = LayerKind::batchnorm;
    bn.name = "bn1";
    bn.in_channels = bn.out_channels = 3;
    Layer bn2 = bn;
    bn2.name = "bn2";
    Layer drop = simple(LayerKind::dropout);
    drop.dropout = 0.3f;
    w.layers = {conv_layer("c1", 1, 3, 4, 2, 1), bn, simple(LayerKind::leaky_relu), drop,
                simple(LayerKind::residual_begin), conv_layer("r1", 3, 3, 3, 1, 1), bn2,
                simple(LayerKind::residual_end), simple(LayerKind::leaky_relu), conv_layer("head", 3, 2, 1),
                simple(LayerKind::logistic)};
    auto add = [&](const std::string& name, std::vector<std::int64_t> shape, float lo, float hi) {
        std::int64_t n = 1;
        for (auto s : shape) n *= s;
        w.tensors.push_back({name, shape, uniform(rng, static_cast<std::size_t>(n), lo, hi)});
    };
    add("c1.weight", {3, 1, 4, 4}, -0.5f, 0.5f);
    add("c1.bias", {3}, -0.1f, 0.1f);
    for (const char* b : {"bn1", "bn2"}) {
        add(std::string(b) + ".weight", {3}, 0.5f, 1.5f);
        add(std::string(b) + ".bias", {3}, -0.2f, 0.2f);
        add(std::string(b) + ".running_mean", {3}, -0.2f, 0.2f);
        add(std::string(b) + ".running_var", {3}, 0.5f, 2.0f);
    }
    add("r1.weight", {3, 3, 3, 3}, -0.3f, 0.3f);
    add("r1.bias", {3}, -0.1f, 0.1f);
    add("head.weight", {2, 3, 1, 1}, -1.0f, 1.0f);
    add("head.bias", {2}, -0.1f, 0.1f);
    w.latent = {6, 6, 2};
    w.validate();
    return w;
}

}  // namespace

TEST_CASE("conv2d matches the direct loop nest") {
    Rng rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        const int c_in = 1 + static_cast<int>(uniform_index(rng, 3));
        const int c_out = 1 + static_cast<int>(uniform_index(rng, 4));
        const int k = 1 + static_cast<int>(uniform_index(rng, 4));
        const int stride = 1 + static_cast<int>(uniform_index(rng, 3));
        const int pad = static_cast<int>(uniform_index(rng, 3));
        const int h = k + static_cast<int>(uniform_index(rng, 8)), w = k + static_cast<int>(uniform_index(rng, 8));
        FeatureMap in{{c_in, h, w}, uniform(rng, static_cast<std::size_t>(c_in) * h * w, -1.0f, 1.0f)};
        Tensor weight{"w", {c_out, c_in, k, k}, uniform(rng, static_cast<std::size_t>(c_out) * c_in * k * k, -1.0f, 1.0f)};
        Tensor bias{"b", {c_out}, uniform(rng, static_cast<std::size_t>(c_out), -1.0f, 1.0f)};
        const bool use_bias = trial % 2 == 0;

        const FeatureMap got = conv2d(in, weight, use_bias ? &bias : nullptr, stride, pad);
        int oh = 0, ow = 0;
        const auto want = oracle::conv2d(in.data, c_in, h, w, weight.data, c_out, k, k,
                                         use_bias ? bias.data : std::vector<float>{}, stride, pad, oh, ow);
        REQUIRE(got.shape == Shape{c_out, oh, ow});
        double err = 0.0;
        for (std::size_t i = 0; i < want.size(); ++i) err = std::max(err, std::abs(got.data[i] - want[i]));
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("zero head on a zero image gives 0.5 everywhere") {
    EncoderWeights w;
    w.input = {1, 4, 4};
    w.layers = {conv_layer("head", 1, 3, 1), simple(LayerKind::logistic)};
    w.tensors = {{"head.weight", {3, 1, 1, 1}, {0, 0, 0}}, {"head.bias", {3}, {0, 0, 0}}};
    w.latent = {4, 4, 3};
    w.validate();
    const auto p = encode_probs(w, {4, 4, std::vector<float>(16, 0.0f)});
    REQUIRE(p.values.size() == 48);
    for (float v : p.values) CHECK(v == 0.5f);
}

TEST_CASE("identity fixture echoes its input") {
    Rng rng(1);
    const auto w = fixtures::identity(8, 6);
    const GrayImage img = image_of(rng, 8, 6);
    const auto p = encode_probs(w, img);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(p.values[i] - img.data[i]) <= 1e-6);
}

TEST_CASE("batchnorm, leaky relu, dropout and residual layers against hand arithmetic") {
    Rng rng(5);
    EncoderWeights w = residual_net(rng);
    const GrayImage img = image_of(rng, 12, 12);
    const FeatureMap got = forward(w, img);

    // Recompute with the direct oracle and explicit formulas.
    auto t = [&](const std::string& n) { return w.tensor(n).data; };
    int oh, ow;
    auto x = oracle::conv2d(img.data, 1, 12, 12, t("c1.weight"), 3, 4, 4, t("c1.bias"), 2, 1, oh, ow);
    auto bn = [&](std::vector<double>& v, const std::string& n) {
        const std::size_t plane = static_cast<std::size_t>(oh) * ow;
        for (int c = 0; c < 3; ++c)
            for (std::size_t k = 0; k < plane; ++k) {
                double& e = v[c * plane + k];
                e = t(n + ".weight")[c] * (e - t(n + ".running_mean")[c]) / std::sqrt(t(n + ".running_var")[c] + 1e-5) +
                    t(n + ".bias")[c];
            }
    };
    auto lrelu = [](std::vector<double>& v) {
        for (double& e : v) e = e >= 0 ? e : 0.01 * e;
    };
    bn(x, "bn1");
    lrelu(x);
    const std::vector<float> skip(x.begin(), x.end());
    auto y = oracle::conv2d(skip, 3, oh, ow, t("r1.weight"), 3, 3, 3, t("r1.bias"), 1, 1, oh, ow);
    bn(y, "bn2");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip[i];
    lrelu(y);
    const std::vector<float> yf(y.begin(), y.end());
    auto z = oracle::conv2d(yf, 3, oh, ow, t("head.weight"), 2, 1, 1, t("head.bias"), 1, 0, oh, ow);
    REQUIRE(got.data.size() == z.size());
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(got.data[i] - 1.0 / (1.0 + std::exp(-z[i]))) <= 1e-5);
}

TEST_CASE("forward pass is bit-identical across calls") {
    Rng rng(6);
    const EncoderWeights w = residual_net(rng);
    const GrayImage img = image_of(rng, 12, 12);
    CHECK(forward(w, img).data == forward(w, img).data);
    CHECK_THROWS_AS(forward(w, image_of(rng, 10, 12)), std::invalid_argument);
}

TEST_CASE("latent map is laid out h, w, c") {
    Rng rng(7);
    const EncoderWeights w = residual_net(rng);
    const GrayImage img = image_of(rng, 12, 12);
    const FeatureMap chw = forward(w, img);
    const LatentMap m = encode_probs(w, img);
    for (int h = 0; h < 6; ++h)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 2; ++c) CHECK(m.values[(h * 6 + x) * 2 + c] == chw.at(c, h, x));
}

TEST_CASE("threshold examples") {
    CHECK(threshold_features(latent(15, 15, 20, std::vector<float>(4500, 0.95f)), 0.9).size() == 4500);
    CHECK(threshold_features(latent(15, 15, 20, std::vector<float>(4500, 0.5f)), 0.9).empty());
    // Inclusive comparison.
    CHECK(threshold_features(latent(1, 1, 1, {0.75f}), 0.75).size() == 1);

    Rng rng(9);
    const auto probs = uniform(rng, 300, 0.0f, 1.0f);
    const auto fs = threshold_features(latent(10, 10, 3, probs), 0.6);
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(fs.contains(static_cast<FeatureId>(i)) == (probs[i] >= 0.6));
}

TEST_CASE("thresholding is monotone in lambda") {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = latent(5, 5, 4, uniform(rng, 100, 0.0f, 1.0f));
        double l1 = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
        double l2 = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
        if (l1 > l2) std::swap(l1, l2);
        const auto lo = threshold_features(m, l1), hi = threshold_features(m, l2);
        CHECK(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
    }
}

TEST_CASE("quantization examples") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(quantize_bin(0.0, 4) == 8);
    CHECK(quantize_bin(-std::numeric_limits<double>::infinity(), 4) == 0);
    CHECK(quantize_bin(std::numeric_limits<double>::infinity(), 4) == 15);
    CHECK(quantize_bin(40.0, 6) == 63);
    const auto f = quantize_features(latent(1, 1, 2, {0.0f, -1e30f}), 4);
    CHECK(std::vector<FeatureId>(f.begin(), f.end()) == std::vector<FeatureId>{0});
    CHECK_THROWS_AS(quantize_bin(std::nan(""), 4), std::invalid_argument);
    CHECK_THROWS_AS(quantize_features(latent(1, 1, 1, {std::numeric_limits<float>::infinity()}), 4),
                    std::invalid_argument);
}

TEST_CASE("quantized bits are written most significant first") {
    for (std::uint32_t bin = 0; bin < 16; ++bin) {
        // Midpoint of the bin in probability space, mapped back through the
        // normal quantile by bisection.
        const double target = (bin + 0.5) / 16.0;
        double lo = -10, hi = 10;
        for (int i = 0; i < 200; ++i) (normal_cdf((lo + hi) / 2) < target ? lo : hi) = (lo + hi) / 2;
        const float mean = static_cast<float>((lo + hi) / 2);
        REQUIRE(quantize_bin(mean, 4) == bin);
        const auto f = quantize_features(latent(1, 1, 1, {mean}), 4);
        for (int j = 0; j < 4; ++j) CHECK(f.contains(static_cast<FeatureId>(j)) == (((bin >> (3 - j)) & 1u) != 0));
    }
}

TEST_CASE("quantization bins are equiprobable under the prior") {
    for (int bits : {4, 6}) {
        Rng rng(static_cast<std::uint64_t>(bits));
        std::normal_distribution<double> n01;
        const int bins = 1 << bits;
        std::vector<int> hist(bins, 0);
        const int samples = 1000000;
        for (int i = 0; i < samples; ++i) ++hist[quantize_bin(n01(rng), bits)];
        const double p = 1.0 / bins, sigma = std::sqrt(samples * p * (1 - p));
        for (int b = 0; b < bins; ++b) CHECK(std::abs(hist[b] - samples * p) <= 3 * sigma);
    }
}

TEST_CASE("feature-space sizes of the reference latents") {
    auto bern = std::make_shared<EncoderWeights>(fixtures::identity(15, 15));
    bern->latent = {15, 15, 20};  // space size is a property of the latent spec
    CHECK(ThresholdExtractor(bern, 0.9).space().size == 4500);
    auto gauss = std::make_shared<EncoderWeights>(fixtures::gaussian_passthrough(15, 15, 5, 1.0f));
    CHECK(QuantizedExtractor(gauss, 4).space().size == 4500);
    CHECK(QuantizedExtractor(gauss, 6).space().size == 6750);
    CHECK_THROWS_AS(ThresholdExtractor(bern, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ThresholdExtractor(gauss, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(QuantizedExtractor(bern, 4), std::invalid_argument);
}

TEST_CASE("gaussian means come from the first half of the head") {
    const auto w = fixtures::gaussian_passthrough(4, 4, 3, 2.0f);
    Rng rng(2);
    const GrayImage img = image_of(rng, 4, 4);
    const auto m = encode_means(w, img);
    REQUIRE(m.values.size() == 48);
    for (int p = 0; p < 16; ++p)
        for (int c = 0; c < 3; ++c) CHECK(m.values[p * 3 + c] == doctest::Approx(2.0f * img.data[p]));
    CHECK_THROWS_AS(encode_probs(w, img), std::invalid_argument);
}

TEST_CASE("grid detector finds the agent and the gems") {
    GridCollect env({.size = 8, .gems = 5, .cell_pixels = 4, .layout_seed = 3});
    auto w = std::make_shared<EncoderWeights>(fixtures::grid_detector(8, 4));
    ThresholdExtractor ex(w, 0.9);
    SimState s = env.initial_state();
    s = env.step(s, GridCollect::kRight, {2}).first;
    s = env.step(s, GridCollect::kDown, {1}).first;
    const auto f = ex.extract(env.render(s), {}).features;
    std::set<FeatureId> expect{static_cast<FeatureId>((s.payload[1] * 8 + s.payload[0]) * 2)};
    for (std::size_t g = 0; g < env.gem_cells().size(); ++g)
        if (s.payload[3 + g]) {
            auto [gx, gy] = env.gem_cells()[g];
            expect.insert(static_cast<FeatureId>((gy * 8 + gx) * 2 + 1));
        }
    CHECK(std::set<FeatureId>(f.begin(), f.end()) == expect);
}

TEST_CASE("preprocess maps palette to gray and box-filters") {
    Screen s(4, 4, 3);
    s.set(0, 0, 2);
    s.set(1, 0, 1);
    const GrayImage g = preprocess(s, 2, 2);
    CHECK(g.at(0, 0) == doctest::Approx((1.0 + 0.5) / 4));
    CHECK(g.at(1, 1) == 0.0f);
    const GrayImage same = preprocess(s, 4, 4);
    CHECK(same.at(0, 0) == 1.0f);
    CHECK(same.at(0, 1) == 0.5f);
}

TEST_CASE("weight file round trip and byte layout") {
    Rng rng(11);
    const EncoderWeights w = residual_net(rng);
    const auto bytes = serialize_weights(w);

    CHECK(std::memcmp(bytes.data(), "VAEIW\0", 6) == 0);
    CHECK(read_le<std::uint16_t>(bytes, 6) == 1);
    const auto mlen = read_le<std::uint64_t>(bytes, 8);
    const std::string manifest(reinterpret_cast<const char*>(bytes.data()) + 16, mlen);
    const auto j = nlohmann::json::parse(manifest);
    CHECK(j.at("latent_spec") == nlohmann::json{6, 6, 2});
    CHECK(j.at("feature_layout") == "hwc");
    CHECK(j.at("layers").size() == w.layers.size());
    const std::size_t blob = 16 + mlen;
    CHECK(read_le<std::uint64_t>(bytes, blob) == w.tensors[0].data.size() * 4);
    CHECK(std::bit_cast<float>(read_le<std::uint32_t>(bytes, blob + 8)) == w.tensors[0].data[0]);
    CHECK(read_le<std::uint32_t>(bytes, bytes.size() - 4) == crc32_ref(bytes.data() + blob, bytes.size() - 4 - blob));

    const EncoderWeights back = parse_weights(bytes);
    CHECK(back.input == w.input);
    CHECK(back.latent == w.latent);
    CHECK(back.layers.size() == w.layers.size());
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        CHECK(back.layers[i].kind == w.layers[i].kind);
        CHECK(back.layers[i].name == w.layers[i].name);
        CHECK(back.layers[i].stride == w.layers[i].stride);
        CHECK(back.layers[i].padding == w.layers[i].padding);
    }
    REQUIRE(back.tensors.size() == w.tensors.size());
    for (std::size_t i = 0; i < w.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == w.tensors[i].name);
        CHECK(back.tensors[i].shape == w.tensors[i].shape);
        CHECK(back.tensors[i].data == w.tensors[i].data);
    }
    const GrayImage img = image_of(rng, 12, 12);
    CHECK(forward(back, img).data == forward(w, img).data);

    const auto path = std::filesystem::temp_directory_path() / "vaeiw_roundtrip.bin";
    save_weights(w, path);
    CHECK(load_weights(path).tensors.size() == w.tensors.size());
    std::filesystem::remove(path);
    CHECK_THROWS(load_weights(path));
}

TEST_CASE("corrupt weight files are rejected") {
    Rng rng(12);
    const EncoderWeights w = residual_net(rng);
    const auto good = serialize_weights(w);

    auto bad = good;
    bad[0] = std::byte{'X'};
    CHECK_THROWS_AS(parse_weights(bad), FormatError);

    bad = good;
    bad[6] = std::byte{2};
    CHECK_THROWS_AS(parse_weights(bad), FormatError);

    bad = good;
    bad[bad.size() - 10] ^= std::byte{0x40};
    CHECK_THROWS_AS(parse_weights(bad), FormatError);

    bad.assign(good.begin(), good.end() - 3);
    CHECK_THROWS_AS(parse_weights(bad), FormatError);

    bad = good;
    bad.push_back(std::byte{0});
    CHECK_THROWS_AS(parse_weights(bad), FormatError);

    CHECK_THROWS_AS(parse_weights(std::vector<std::byte>(4)), FormatError);
}

TEST_CASE("non-finite tensors are rejected") {
    EncoderWeights w = fixtures::identity(4, 4);
    w.tensors[0].data[0] = std::nanf("");
    CHECK_THROWS_AS(parse_weights(serialize_weights(w)), FormatError);
    CHECK_THROWS_AS(w.validate(), FormatError);
}

TEST_CASE("shape inconsistencies are rejected") {
    SUBCASE("conv out-channels disagree with tensor rows") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.layers[0].out_channels = 2;
        w.latent.channels = 2;
        CHECK_THROWS_AS(parse_weights(serialize_weights(w)), ShapeError);
    }
    SUBCASE("latent spec disagrees with the head") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.latent = {4, 4, 3};
        CHECK_THROWS_AS(w.validate(), ShapeError);
    }
    SUBCASE("unreferenced tensor") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.tensors.push_back({"extra", {1}, {0.0f}});
        CHECK_THROWS_AS(w.validate(), ShapeError);
    }
    SUBCASE("data length disagrees with the shape") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.tensors[1].data.push_back(0.0f);
        CHECK_THROWS_AS(parse_weights(serialize_weights(w)), ShapeError);
    }
    SUBCASE("transposed convolution in the encoder") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.layers[0].kind = LayerKind::conv_transpose;
        CHECK_THROWS_AS(w.validate(), ShapeError);
    }
    SUBCASE("unbalanced residual block") {
        EncoderWeights w = fixtures::identity(4, 4);
        w.layers.insert(w.layers.begin(), simple(LayerKind::residual_begin));
        CHECK_THROWS_AS(w.validate(), ShapeError);
    }
}
