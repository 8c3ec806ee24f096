#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaeiw/features.hpp"
#include "vaeiw/image.hpp"

namespace vaeiw::neural {

/// Malformed weight file: bad magic, unsupported version, truncated data,
/// checksum mismatch or non-finite values.
class FormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Layer topology inconsistent with the tensors or the declared sizes.
class ShapeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LayerKind { conv, conv_transpose, batchnorm, leaky_relu, dropout, residual_begin, residual_end, logistic };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

struct Layer {
    LayerKind kind = LayerKind::conv;
    std::string name;  ///< tensor prefix for conv / batchnorm
    int in_channels = 0;
    int out_channels = 0;  ///< conv output channels; batchnorm channels
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int padding = 0;
    bool bias = true;
    float epsilon = 1e-5f;
    float slope = 0.01f;
    float dropout = 0.0f;
};

struct Tensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    std::int64_t numel() const;
};

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;
    bool operator==(const Shape&) const = default;
};

struct LatentSpec {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::uint64_t size() const {
        return static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width) *
               static_cast<std::uint64_t>(channels);
    }
    bool operator==(const LatentSpec&) const = default;
};

enum class ModelKind { bernoulli, gaussian };

/// Encoder layers and tensors as read from a weight file. Conv kernels are
/// (out, in, kh, kw); batchnorm tensors are <name>.weight, .bias,
/// .running_mean, .running_var; conv tensors are <name>.weight and
/// optionally <name>.bias. The bernoulli head emits `latent.channels`
/// probabilities per cell; the gaussian head emits means followed by
/// log-variances (2 * latent.channels).
struct EncoderWeights {
    Shape input{1, 32, 32};
    std::vector<Layer> layers;
    std::vector<Tensor> tensors;
    LatentSpec latent;
    ModelKind model_kind = ModelKind::bernoulli;
    double lambda = 0.9;
    std::string feature_layout = "hwc";

    /// Output shape after each layer, filled by validate().
    std::vector<Shape> shapes;

    /// Shape propagation from `input`; throws ShapeError or FormatError.
    void validate();

    const Tensor& tensor(const std::string& name) const;
    const Tensor* find_tensor(const std::string& name) const;
    Shape output_shape() const { return shapes.empty() ? input : shapes.back(); }
};

// Weight file: "VAEIW\0", u16 version, u64 manifest length, UTF-8 JSON
// manifest, then one (u64 byte length, float32 data) blob per manifest tensor,
// closed by the CRC32 of the blob section. Little-endian throughout.
inline constexpr std::uint16_t kFormatVersion = 1;

std::vector<std::byte> serialize_weights(const EncoderWeights& w);
EncoderWeights parse_weights(std::span<const std::byte> bytes);
EncoderWeights load_weights(const std::filesystem::path& path);
void save_weights(const EncoderWeights& w, const std::filesystem::path& path);

/// CHW activation.
struct FeatureMap {
    Shape shape;
    std::vector<float> data;

    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
    }
};

/// Zero-padded 2-D convolution, accumulated in double per output element.
FeatureMap conv2d(const FeatureMap& in, const Tensor& weight, const Tensor* bias, int stride, int padding);

/// Runs every layer in inference mode (batchnorm from running stats, dropout
/// as identity) and returns the head output.
FeatureMap forward(const EncoderWeights& w, const GrayImage& image);

/// Latent values in feature-id order: index (h * W + w) * C + c.
struct LatentMap {
    LatentSpec spec;
    std::vector<float> values;
};

/// Bernoulli kind only. Every value is checked to be a probability.
LatentMap encode_probs(const EncoderWeights& w, const GrayImage& image);
/// Gaussian kind only: posterior means.
LatentMap encode_means(const EncoderWeights& w, const GrayImage& image);

/// Feature i is set iff probs[i] >= lambda.
FeatureSet threshold_features(const LatentMap& probs, double lambda);

/// Standard normal CDF.
double normal_cdf(double x);
/// min(2^bits - 1, floor(Phi(mean) * 2^bits)); bins are equiprobable under N(0, 1).
std::uint32_t quantize_bin(double mean, int bits);
/// Latent i contributes features i*bits + j for each bit j of its bin that is
/// 1, most significant bit first.
FeatureSet quantize_features(const LatentMap& means, int bits);

class ThresholdExtractor final : public FeatureExtractor {
public:
    ThresholdExtractor(std::shared_ptr<const EncoderWeights> weights, double lambda);

    FeatureSpace space() const override;
    Extraction extract(const Screen& screen, const FeatureSet& prev_carry) const override;

private:
    std::shared_ptr<const EncoderWeights> weights_;
    double lambda_;
};

class QuantizedExtractor final : public FeatureExtractor {
public:
    QuantizedExtractor(std::shared_ptr<const EncoderWeights> weights, int bits);

    FeatureSpace space() const override;
    Extraction extract(const Screen& screen, const FeatureSet& prev_carry) const override;

private:
    std::shared_ptr<const EncoderWeights> weights_;
    int bits_;
};

namespace fixtures {

/// One 1x1 conv with weight 1 and bias 0: probabilities echo the input.
EncoderWeights identity(int height, int width);

/// Hand-built detector for GridCollect screens (palette 3, cell_pixels per
/// cell): a cell-sized stride conv averages each cell, a 1x1 conv separates
/// "agent" (gray 0.5) from "gem" (gray 1.0), logistic head. Latent is
/// board x board x 2.
EncoderWeights grid_detector(int board, int cell_pixels);

/// Gaussian head whose means are `scale` times each input pixel (1x1 conv,
/// `channels` identical channels, zero log-variance).
EncoderWeights gaussian_passthrough(int height, int width, int channels, float scale);

}  // namespace fixtures

}  // namespace vaeiw::neural
