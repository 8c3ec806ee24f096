#include "vaeiw/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace vaeiw {

GrayImage preprocess(const Screen& screen, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1) throw std::invalid_argument("preprocess: output size must be positive");
    const float scale = screen.palette_size > 1 ? 1.0f / static_cast<float>(screen.palette_size - 1) : 0.0f;
    GrayImage img{out_height, out_width, std::vector<float>(static_cast<std::size_t>(out_height) * out_width)};
    for (int oy = 0; oy < out_height; ++oy) {
        const int y0 = oy * screen.height / out_height;
        const int y1 = std::max(y0 + 1, (oy + 1) * screen.height / out_height);
        for (int ox = 0; ox < out_width; ++ox) {
            const int x0 = ox * screen.width / out_width;
            const int x1 = std::max(x0 + 1, (ox + 1) * screen.width / out_width);
            double sum = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) sum += screen.at(x, y);
            img.data[static_cast<std::size_t>(oy) * out_width + ox] =
                static_cast<float>(sum / ((y1 - y0) * (x1 - x0))) * scale;
        }
    }
    return img;
}

}  // namespace vaeiw

namespace vaeiw::neural {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::conv_transpose: return "conv_transpose";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::leaky_relu: return "leaky_relu";
        case LayerKind::dropout: return "dropout";
        case LayerKind::residual_begin: return "residual_begin";
        case LayerKind::residual_end: return "residual_end";
        case LayerKind::logistic: return "logistic";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (auto k : {LayerKind::conv, LayerKind::conv_transpose, LayerKind::batchnorm, LayerKind::leaky_relu,
                   LayerKind::dropout, LayerKind::residual_begin, LayerKind::residual_end, LayerKind::logistic})
        if (to_string(k) == s) return k;
    throw FormatError("unknown layer kind: " + s);
}

std::int64_t Tensor::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>{});
}

const Tensor* EncoderWeights::find_tensor(const std::string& name) const {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Tensor& t) { return t.name == name; });
    return it == tensors.end() ? nullptr : &*it;
}

const Tensor& EncoderWeights::tensor(const std::string& name) const {
    if (const Tensor* t = find_tensor(name)) return *t;
    throw ShapeError("missing tensor: " + name);
}

namespace {

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

void expect_shape(const EncoderWeights& w, const std::string& name, const std::vector<std::int64_t>& expected,
                  std::vector<std::string>& used) {
    const Tensor& t = w.tensor(name);
    if (t.shape != expected)
        throw ShapeError("tensor " + name + " has shape " + shape_str(t.shape) + ", layer expects " +
                         shape_str(expected));
    used.push_back(name);
}

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

void EncoderWeights::validate() {
    if (input.channels != 1 || input.height < 1 || input.width < 1)
        throw ShapeError("input must be a single-channel image with positive size");
    if (latent.height < 1 || latent.width < 1 || latent.channels < 1) throw ShapeError("latent spec must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ShapeError("lambda must lie strictly inside (0, 1)");
    if (feature_layout != "hwc") throw ShapeError("unsupported feature layout: " + feature_layout);

    std::vector<std::string> used;
    std::vector<Shape> residual_stack;
    Shape cur = input;
    shapes.clear();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::conv: {
                if (l.in_channels != cur.channels)
                    throw ShapeError(where + ": in_channels " + std::to_string(l.in_channels) + " but input has " +
                                     std::to_string(cur.channels));
                if (l.out_channels < 1 || l.kernel_h < 1 || l.kernel_w < 1 || l.stride < 1 || l.padding < 0)
                    throw ShapeError(where + ": invalid conv geometry");
                expect_shape(*this, l.name + ".weight", {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w}, used);
                if (l.bias) expect_shape(*this, l.name + ".bias", {l.out_channels}, used);
                const int h = conv_out(cur.height, l.kernel_h, l.stride, l.padding);
                const int w = conv_out(cur.width, l.kernel_w, l.stride, l.padding);
                if (cur.height + 2 * l.padding < l.kernel_h || cur.width + 2 * l.padding < l.kernel_w)
                    throw ShapeError(where + ": kernel larger than padded input");
                cur = {l.out_channels, h, w};
                break;
            }
            case LayerKind::conv_transpose:
                throw ShapeError(where + ": transposed convolutions belong to the decoder, not the encoder");
            case LayerKind::batchnorm:
                if (l.out_channels != cur.channels)
                    throw ShapeError(where + ": channels " + std::to_string(l.out_channels) + " but input has " +
                                     std::to_string(cur.channels));
                if (!(l.epsilon > 0.0f)) throw ShapeError(where + ": epsilon must be positive");
                for (const char* suffix : {".weight", ".bias", ".running_mean", ".running_var"})
                    expect_shape(*this, l.name + suffix, {cur.channels}, used);
                for (float v : tensor(l.name + ".running_var").data)
                    if (v < 0.0f) throw ShapeError(where + ": negative running variance");
                break;
            case LayerKind::leaky_relu:
            case LayerKind::dropout:
            case LayerKind::logistic: break;
            case LayerKind::residual_begin: residual_stack.push_back(cur); break;
            case LayerKind::residual_end:
                if (residual_stack.empty()) throw ShapeError(where + ": residual_end without residual_begin");
                if (!(residual_stack.back() == cur)) throw ShapeError(where + ": residual branch changes the shape");
                residual_stack.pop_back();
                break;
        }
        shapes.push_back(cur);
    }
    if (!residual_stack.empty()) throw ShapeError("unterminated residual block");

    const int head_channels = model_kind == ModelKind::gaussian ? 2 * latent.channels : latent.channels;
    if (cur.channels != head_channels || cur.height != latent.height || cur.width != latent.width)
        throw ShapeError("encoder output " + std::to_string(cur.channels) + "x" + std::to_string(cur.height) + "x" +
                         std::to_string(cur.width) + " does not match the latent spec");

    for (const Tensor& t : tensors) {
        if (t.numel() != static_cast<std::int64_t>(t.data.size()))
            throw ShapeError("tensor " + t.name + " data length does not match its shape");
        if (std::find(used.begin(), used.end(), t.name) == used.end())
            throw ShapeError("tensor " + t.name + " is not referenced by any layer");
        if (std::count_if(tensors.begin(), tensors.end(), [&](const Tensor& o) { return o.name == t.name; }) != 1)
            throw ShapeError("duplicate tensor " + t.name);
        for (float v : t.data)
            if (!std::isfinite(v)) throw FormatError("tensor " + t.name + " contains a non-finite value");
    }
}

FeatureMap conv2d(const FeatureMap& in, const Tensor& weight, const Tensor* bias, int stride, int padding) {
    const int oc_n = static_cast<int>(weight.shape.at(0));
    const int ic_n = static_cast<int>(weight.shape.at(1));
    const int kh_n = static_cast<int>(weight.shape.at(2));
    const int kw_n = static_cast<int>(weight.shape.at(3));
    if (ic_n != in.shape.channels) throw ShapeError("conv2d: channel mismatch");
    const int oh_n = conv_out(in.shape.height, kh_n, stride, padding);
    const int ow_n = conv_out(in.shape.width, kw_n, stride, padding);

    FeatureMap out{{oc_n, oh_n, ow_n}, std::vector<float>(static_cast<std::size_t>(oc_n) * oh_n * ow_n)};
    std::vector<double> acc(static_cast<std::size_t>(oh_n) * ow_n);
    for (int oc = 0; oc < oc_n; ++oc) {
        std::fill(acc.begin(), acc.end(), bias ? static_cast<double>(bias->data[oc]) : 0.0);
        for (int ic = 0; ic < ic_n; ++ic) {
            const float* plane = in.data.data() + static_cast<std::size_t>(ic) * in.shape.height * in.shape.width;
            for (int kh = 0; kh < kh_n; ++kh) {
                for (int kw = 0; kw < kw_n; ++kw) {
                    const double wv =
                        weight.data[((static_cast<std::size_t>(oc) * ic_n + ic) * kh_n + kh) * kw_n + kw];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < oh_n; ++oy) {
                        const int iy = oy * stride - padding + kh;
                        if (iy < 0 || iy >= in.shape.height) continue;
                        const float* row = plane + static_cast<std::size_t>(iy) * in.shape.width;
                        double* dst = acc.data() + static_cast<std::size_t>(oy) * ow_n;
                        for (int ox = 0; ox < ow_n; ++ox) {
                            const int ix = ox * stride - padding + kw;
                            if (ix >= 0 && ix < in.shape.width) dst[ox] += wv * row[ix];
                        }
                    }
                }
            }
        }
        std::transform(acc.begin(), acc.end(), out.data.begin() + static_cast<std::ptrdiff_t>(oc) * oh_n * ow_n,
                       [](double v) { return static_cast<float>(v); });
    }
    return out;
}

FeatureMap forward(const EncoderWeights& w, const GrayImage& image) {
    if (image.height != w.input.height || image.width != w.input.width)
        throw std::invalid_argument("encoder expects " + std::to_string(w.input.height) + "x" +
                                    std::to_string(w.input.width) + " input, got " + std::to_string(image.height) +
                                    "x" + std::to_string(image.width));
    FeatureMap x{{1, image.height, image.width}, image.data};
    std::vector<FeatureMap> saved;

    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const Layer& l = w.layers[i];
        switch (l.kind) {
            case LayerKind::conv:
                x = conv2d(x, w.tensor(l.name + ".weight"), l.bias ? &w.tensor(l.name + ".bias") : nullptr, l.stride,
                           l.padding);
                break;
            case LayerKind::batchnorm: {
                const auto& gamma = w.tensor(l.name + ".weight").data;
                const auto& beta = w.tensor(l.name + ".bias").data;
                const auto& mean = w.tensor(l.name + ".running_mean").data;
                const auto& var = w.tensor(l.name + ".running_var").data;
                const std::size_t plane = static_cast<std::size_t>(x.shape.height) * x.shape.width;
                for (int c = 0; c < x.shape.channels; ++c) {
                    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + l.epsilon);
                    const double a = gamma[c] * inv;
                    const double b = beta[c] - mean[c] * a;
                    float* p = x.data.data() + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) p[k] = static_cast<float>(a * p[k] + b);
                }
                break;
            }
            case LayerKind::leaky_relu:
                for (float& v : x.data) v = v >= 0.0f ? v : l.slope * v;
                break;
            case LayerKind::dropout: break;
            case LayerKind::logistic:
                for (float& v : x.data) v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
                break;
            case LayerKind::residual_begin: saved.push_back(x); break;
            case LayerKind::residual_end: {
                const FeatureMap& skip = saved.back();
                for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += skip.data[k];
                saved.pop_back();
                break;
            }
            case LayerKind::conv_transpose: throw ShapeError("conv_transpose is not supported in the encoder");
        }
        for (float v : x.data)
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite activation after layer " + std::to_string(i) + " (" +
                                         to_string(l.kind) + "); weights are corrupt");
    }
    return x;
}

namespace {

LatentMap to_hwc(const FeatureMap& x, const LatentSpec& spec, int first_channel) {
    LatentMap m{spec, std::vector<float>(spec.size())};
    for (int h = 0; h < spec.height; ++h)
        for (int w = 0; w < spec.width; ++w)
            for (int c = 0; c < spec.channels; ++c)
                m.values[(static_cast<std::size_t>(h) * spec.width + w) * spec.channels + c] =
                    x.at(first_channel + c, h, w);
    return m;
}

}  // namespace

LatentMap encode_probs(const EncoderWeights& w, const GrayImage& image) {
    if (w.model_kind != ModelKind::bernoulli) throw std::invalid_argument("encode_probs needs a bernoulli model");
    LatentMap m = to_hwc(forward(w, image), w.latent, 0);
    for (float p : m.values)
        if (!(p >= 0.0f && p <= 1.0f)) throw std::runtime_error("encoder head produced a value outside [0, 1]");
    return m;
}

LatentMap encode_means(const EncoderWeights& w, const GrayImage& image) {
    if (w.model_kind != ModelKind::gaussian) throw std::invalid_argument("encode_means needs a gaussian model");
    return to_hwc(forward(w, image), w.latent, 0);
}

FeatureSet threshold_features(const LatentMap& probs, double lambda) {
    std::vector<FeatureId> ids;
    for (std::size_t i = 0; i < probs.values.size(); ++i)
        if (probs.values[i] >= lambda) ids.push_back(static_cast<FeatureId>(i));
    return FeatureSet::from_sorted(std::move(ids));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::uint32_t quantize_bin(double mean, int bits) {
    if (bits < 1 || bits > 16) throw std::invalid_argument("quantization bits must be in [1, 16]");
    if (std::isnan(mean)) throw std::invalid_argument("cannot quantize a NaN mean");
    const std::uint32_t bins = 1u << bits;
    const double scaled = std::floor(normal_cdf(mean) * bins);
    return std::min(bins - 1, static_cast<std::uint32_t>(std::max(0.0, scaled)));
}

FeatureSet quantize_features(const LatentMap& means, int bits) {
    std::vector<FeatureId> ids;
    for (std::size_t i = 0; i < means.values.size(); ++i) {
        if (!std::isfinite(means.values[i])) throw std::invalid_argument("non-finite posterior mean");
        const std::uint32_t bin = quantize_bin(means.values[i], bits);
        for (int j = 0; j < bits; ++j)
            if ((bin >> (bits - 1 - j)) & 1u) ids.push_back(static_cast<FeatureId>(i * bits + j));
    }
    return FeatureSet::from_sorted(std::move(ids));
}

ThresholdExtractor::ThresholdExtractor(std::shared_ptr<const EncoderWeights> weights, double lambda)
    : weights_(std::move(weights)), lambda_(lambda) {
    if (!weights_) throw std::invalid_argument("threshold extractor: no weights");
    if (weights_->model_kind != ModelKind::bernoulli)
        throw std::invalid_argument("threshold extractor needs a bernoulli model");
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie strictly inside (0, 1)");
}

FeatureSpace ThresholdExtractor::space() const { return {weights_->latent.size(), FeatureBackend::neural}; }

Extraction ThresholdExtractor::extract(const Screen& screen, const FeatureSet&) const {
    const GrayImage img = preprocess(screen, weights_->input.height, weights_->input.width);
    return {threshold_features(encode_probs(*weights_, img), lambda_), {}};
}

QuantizedExtractor::QuantizedExtractor(std::shared_ptr<const EncoderWeights> weights, int bits)
    : weights_(std::move(weights)), bits_(bits) {
    if (!weights_) throw std::invalid_argument("quantized extractor: no weights");
    if (weights_->model_kind != ModelKind::gaussian)
        throw std::invalid_argument("quantized extractor needs a gaussian model");
    if (bits < 1 || bits > 16) throw std::invalid_argument("quantization bits must be in [1, 16]");
}

FeatureSpace QuantizedExtractor::space() const {
    return {weights_->latent.size() * static_cast<std::uint64_t>(bits_), FeatureBackend::neural};
}

Extraction QuantizedExtractor::extract(const Screen& screen, const FeatureSet&) const {
    const GrayImage img = preprocess(screen, weights_->input.height, weights_->input.width);
    return {quantize_features(encode_means(*weights_, img), bits_), {}};
}

namespace fixtures {

EncoderWeights identity(int height, int width) {
    EncoderWeights w;
    w.input = {1, height, width};
    Layer conv;
    conv.kind = LayerKind::conv;
    conv.name = "id";
    conv.in_channels = conv.out_channels = 1;
    w.layers = {conv};
    w.tensors = {{"id.weight", {1, 1, 1, 1}, {1.0f}}, {"id.bias", {1}, {0.0f}}};
    w.latent = {height, width, 1};
    w.validate();
    return w;
}

EncoderWeights grid_detector(int board, int cell_pixels) {
    EncoderWeights w;
    w.input = {1, board * cell_pixels, board * cell_pixels};

    Layer pool;
    pool.kind = LayerKind::conv;
    pool.name = "cell";
    pool.in_channels = 1;
    pool.out_channels = 2;
    pool.kernel_h = pool.kernel_w = pool.stride = cell_pixels;
    Layer act;
    act.kind = LayerKind::leaky_relu;
    Layer mix;
    mix.kind = LayerKind::conv;
    mix.name = "head";
    mix.in_channels = 2;
    mix.out_channels = 2;
    Layer sig;
    sig.kind = LayerKind::logistic;
    w.layers = {pool, act, mix, sig};

    // Channel 0 sees (mean - 0.25), channel 1 sees (mean - 0.75). After the
    // leaky ReLU, 100*h0 - 300*h1 - 12.5 is large only for mean 0.5 (agent)
    // and 100*h1 - 12.5 only for mean 1.0 (gem).
    const int taps = cell_pixels * cell_pixels;
    std::vector<float> pool_w(2 * taps, 1.0f / static_cast<float>(taps));
    w.tensors = {
        {"cell.weight", {2, 1, cell_pixels, cell_pixels}, pool_w},
        {"cell.bias", {2}, {-0.25f, -0.75f}},
        {"head.weight", {2, 2, 1, 1}, {100.0f, -300.0f, 0.0f, 100.0f}},
        {"head.bias", {2}, {-12.5f, -12.5f}},
    };
    w.latent = {board, board, 2};
    w.validate();
    return w;
}

EncoderWeights gaussian_passthrough(int height, int width, int channels, float scale) {
    EncoderWeights w;
    w.input = {1, height, width};
    w.model_kind = ModelKind::gaussian;
    Layer conv;
    conv.kind = LayerKind::conv;
    conv.name = "head";
    conv.in_channels = 1;
    conv.out_channels = 2 * channels;
    w.layers = {conv};
    std::vector<float> weight(2 * channels, 0.0f);
    for (int c = 0; c < channels; ++c) weight[c] = scale;
    w.tensors = {{"head.weight", {2 * channels, 1, 1, 1}, weight},
                 {"head.bias", {2 * channels}, std::vector<float>(2 * channels, 0.0f)}};
    w.latent = {height, width, channels};
    w.validate();
    return w;
}

}  // namespace fixtures

}  // namespace vaeiw::neural
