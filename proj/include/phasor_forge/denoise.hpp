#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "phasor_forge/core.hpp"

namespace phasor_forge {

/// Repeated 2D median filter applied slice by slice with replicate-padded
/// borders. window must be odd and >= 3.
ImageStack median_filter(const ImageStack& stack, int passes, int window = 3);

/// As median_filter, but each window only draws on masked-in pixels, so
/// invalid pixels never bleed into valid ones. With all pixels masked in this
/// equals median_filter. Masked-out pixels pass through unchanged.
ImageStack masked_median_filter(const ImageStack& stack, const Mask& mask, int passes, int window = 3);

// 3x3 convolution layer; weights laid out [out][in][ky][kx].
struct ConvLayer {
    std::uint32_t out_channels = 0;
    std::uint32_t in_channels = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

// Plain 3x3 convolution stack, ReLU between layers. With residual = true the
// network predicts the noise and the denoised output is input - prediction.
struct DenoiserModel {
    std::vector<ConvLayer> layers;
    bool residual = true;

    std::size_t parameter_count() const;
    // Throws ShapeChainBroken.
    void validate() const;

    friend bool operator==(const DenoiserModel&, const DenoiserModel&) = default;
};

struct DenoiserArchitecture {
    int depth = 7;
    int channels = 32;
};

// He-uniform weights, zero biases.
DenoiserModel make_denoiser_model(const DenoiserArchitecture& arch, std::uint64_t seed);

// Executable form of a DenoiserModel in precision T. Parameters are flattened
// layer by layer as weights then biases, the same order as the weight file.
template <typename T>
class ConvNet {
public:
    explicit ConvNet(const DenoiserModel& model);

    std::span<T> parameters() { return params_; }
    std::span<const T> parameters() const { return params_; }
    std::size_t parameter_count() const { return params_.size(); }
    bool residual() const { return residual_; }

    // Raw network output (the noise estimate for residual models).
    void forward(std::span<const T> input, std::size_t height, std::size_t width, std::span<T> output) const;
    // Denoised image: input - forward(input) for residual models.
    void denoise(std::span<const T> input, std::size_t height, std::size_t width, std::span<T> output) const;

    /// Mean squared error between denoise(noisy) and clean; accumulates
    /// d(loss)/d(parameters) into grad (sized parameter_count()).
    T loss_and_gradient(std::span<const T> noisy, std::span<const T> clean, std::size_t height, std::size_t width,
                        std::span<T> grad) const;

    DenoiserModel to_model() const;

private:
    struct LayerShape {
        std::size_t out_c, in_c, weight_offset, bias_offset;
    };

    std::vector<LayerShape> shapes_;
    std::vector<T> params_;
    bool residual_ = true;
};

extern template class ConvNet<float>;
extern template class ConvNet<double>;

/// Per slice: normalize to [0, 1], run the network, denormalize with the
/// slice's record. Output dims equal input dims.
ImageStack cnn_denoise(const ImageStack& stack, const DenoiserModel& model);

struct TrainConfig {
    int epochs = 20;
    int batch_size = 8;
    int patch_size = 40;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    DenoiserArchitecture architecture;
};

struct TrainResult {
    DenoiserModel model;
    // Index 0 is before the first update; one entry per epoch after that.
    std::vector<double> validation_loss;
    std::vector<double> train_loss;
    int best_epoch = 0;
};

using ImagePair = std::pair<ImageStack, ImageStack>;  // (noisy, clean)

/// Mini-batch SGD with momentum on random patches of the residual target.
///
/// Every slice is normalized by its noisy image's range (the clean image uses
/// the same record, so targets live in the network's input space). With two
/// or more pairs the last ceil(n/8) pairs are held out for validation, else
/// the training pair is the validation set. Returns the model with the lowest
/// validation loss, earliest on ties. Per-patch gradients are reduced in patch
/// order, so results do not depend on the thread count.
TrainResult train_denoiser(const std::vector<ImagePair>& pairs, const TrainConfig& cfg);
TrainResult train_denoiser(const std::vector<ImagePair>& pairs, const TrainConfig& cfg, DenoiserModel initial);

// FWT1 weight file: "FWT1", u32 layer count, then per layer u32 out_c, in_c,
// kh = 3, kw = 3, float32 weights, float32 biases. All little-endian.
std::vector<std::uint8_t> encode_model(const DenoiserModel& model);
DenoiserModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const DenoiserModel& model, const std::filesystem::path& path);
DenoiserModel load_model(const std::filesystem::path& path);

struct MedianMethod {
    int passes = 2;
    int window = 3;
};

struct CnnMethod {
    DenoiserModel model;
};

using DenoiseMethod = std::variant<MedianMethod, CnnMethod>;

// Same denoiser on g and s independently. Mask and omega are carried over and
// masked-out pixels reset to zero.
PhasorField denoise_phasor(const PhasorField& field, const DenoiseMethod& method);

}  // namespace phasor_forge
