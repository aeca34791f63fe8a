#include <algorithm>
#include <cmath>
#include <string>

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/parallel.hpp"
#include "phasor_forge/rng.hpp"

namespace phasor_forge {

namespace {

constexpr std::uint32_t kInitChannel = 0x1417u;

// Replicate-pad `channels` planes of h x w into (h + 2) x (w + 2).
template <typename T>
void pad_replicate(const T* in, std::size_t channels, std::size_t h, std::size_t w, T* out) {
    const std::size_t pw = w + 2;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = in + c * h * w;
        T* dst = out + c * (h + 2) * pw;
        for (std::size_t py = 0; py < h + 2; ++py) {
            const std::size_t y = py == 0 ? 0 : std::min(h - 1, py - 1);
            const T* row = src + y * w;
            T* drow = dst + py * pw;
            drow[0] = row[0];
            std::copy(row, row + w, drow + 1);
            drow[w + 1] = row[w - 1];
        }
    }
}

// Adjoint of pad_replicate: scatter padded gradients back onto edge pixels.
template <typename T>
void fold_replicate(const T* padded, std::size_t channels, std::size_t h, std::size_t w, T* out) {
    const std::size_t pw = w + 2;
    std::fill(out, out + channels * h * w, T(0));
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = padded + c * (h + 2) * pw;
        T* dst = out + c * h * w;
        for (std::size_t py = 0; py < h + 2; ++py) {
            const std::size_t y = py == 0 ? 0 : std::min(h - 1, py - 1);
            const T* row = src + py * pw;
            T* drow = dst + y * w;
            drow[0] += row[0];
            for (std::size_t x = 0; x < w; ++x) drow[x] += row[x + 1];
            drow[w - 1] += row[w + 1];
        }
    }
}

template <typename T>
void conv3x3(const T* padded, std::size_t in_c, std::size_t out_c, std::size_t h, std::size_t w, const T* weights,
             const T* bias, T* out) {
    const std::size_t pw = w + 2;
    const std::size_t plane = (h + 2) * pw;
    for (std::size_t o = 0; o < out_c; ++o) {
        T* dst = out + o * h * w;
        std::fill(dst, dst + h * w, bias[o]);
        for (std::size_t i = 0; i < in_c; ++i) {
            const T* src = padded + i * plane;
            const T* k = weights + (o * in_c + i) * 9;
            for (std::size_t y = 0; y < h; ++y) {
                T* drow = dst + y * w;
                const T* r0 = src + y * pw;
                const T* r1 = r0 + pw;
                const T* r2 = r1 + pw;
                for (std::size_t x = 0; x < w; ++x) {
                    drow[x] += k[0] * r0[x] + k[1] * r0[x + 1] + k[2] * r0[x + 2] + k[3] * r1[x] + k[4] * r1[x + 1] +
                               k[5] * r1[x + 2] + k[6] * r2[x] + k[7] * r2[x + 1] + k[8] * r2[x + 2];
                }
            }
        }
    }
}

}  // namespace

std::size_t DenoiserModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

void DenoiserModel::validate() const {
    if (layers.empty()) throw Error(ErrorCode::ShapeChainBroken, "model has no layers");
    if (layers.front().in_channels != 1) throw Error(ErrorCode::ShapeChainBroken, "first layer must take 1 channel");
    if (layers.back().out_channels != 1) throw Error(ErrorCode::ShapeChainBroken, "last layer must emit 1 channel");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.out_channels == 0 || layer.in_channels == 0) {
            throw Error(ErrorCode::ShapeChainBroken, "layer " + std::to_string(l) + " has zero channels");
        }
        if (l > 0 && layer.in_channels != layers[l - 1].out_channels) {
            throw Error(ErrorCode::ShapeChainBroken, "layer " + std::to_string(l) + " input channels break the chain");
        }
        if (layer.weights.size() != std::size_t{layer.out_channels} * layer.in_channels * 9 ||
            layer.bias.size() != layer.out_channels) {
            throw Error(ErrorCode::ShapeChainBroken, "layer " + std::to_string(l) + " parameter count mismatch");
        }
    }
}

DenoiserModel make_denoiser_model(const DenoiserArchitecture& arch, std::uint64_t seed) {
    if (arch.depth < 1 || arch.channels < 1) throw Error(ErrorCode::InvalidArgument, "depth and channels must be >= 1");
    DenoiserModel model;
    CounterStream stream(seed, 0, kInitChannel);
    for (int l = 0; l < arch.depth; ++l) {
        ConvLayer layer;
        layer.in_channels = l == 0 ? 1u : static_cast<std::uint32_t>(arch.channels);
        layer.out_channels = l == arch.depth - 1 ? 1u : static_cast<std::uint32_t>(arch.channels);
        const double bound = std::sqrt(6.0 / (9.0 * layer.in_channels));
        layer.weights.resize(std::size_t{layer.out_channels} * layer.in_channels * 9);
        for (auto& w : layer.weights) w = static_cast<float>((2.0 * stream.uniform() - 1.0) * bound);
        layer.bias.assign(layer.out_channels, 0.0f);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

template <typename T>
ConvNet<T>::ConvNet(const DenoiserModel& model) : residual_(model.residual) {
    model.validate();
    std::size_t offset = 0;
    for (const auto& layer : model.layers) {
        LayerShape shape{layer.out_channels, layer.in_channels, offset, offset + layer.weights.size()};
        offset = shape.bias_offset + layer.bias.size();
        shapes_.push_back(shape);
        params_.insert(params_.end(), layer.weights.begin(), layer.weights.end());
        params_.insert(params_.end(), layer.bias.begin(), layer.bias.end());
    }
}

template <typename T>
DenoiserModel ConvNet<T>::to_model() const {
    DenoiserModel model;
    model.residual = residual_;
    for (const auto& s : shapes_) {
        ConvLayer layer;
        layer.out_channels = static_cast<std::uint32_t>(s.out_c);
        layer.in_channels = static_cast<std::uint32_t>(s.in_c);
        for (std::size_t i = 0; i < s.out_c * s.in_c * 9; ++i) {
            layer.weights.push_back(static_cast<float>(params_[s.weight_offset + i]));
        }
        for (std::size_t i = 0; i < s.out_c; ++i) layer.bias.push_back(static_cast<float>(params_[s.bias_offset + i]));
        model.layers.push_back(std::move(layer));
    }
    return model;
}

template <typename T>
void ConvNet<T>::forward(std::span<const T> input, std::size_t h, std::size_t w, std::span<T> output) const {
    const std::size_t hw = h * w;
    if (input.size() != hw || output.size() != hw || hw == 0) {
        throw Error(ErrorCode::ModelShapeMismatch, "forward buffer size mismatch");
    }
    std::vector<T> act(input.begin(), input.end());
    std::vector<T> padded;
    std::vector<T> next;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        const auto& s = shapes_[l];
        padded.resize(s.in_c * (h + 2) * (w + 2));
        pad_replicate(act.data(), s.in_c, h, w, padded.data());
        next.resize(s.out_c * hw);
        conv3x3(padded.data(), s.in_c, s.out_c, h, w, params_.data() + s.weight_offset, params_.data() + s.bias_offset,
                next.data());
        if (l + 1 < shapes_.size()) {
            for (auto& v : next) v = std::max(v, T(0));
        }
        act.swap(next);
    }
    std::copy(act.begin(), act.end(), output.begin());
}

template <typename T>
void ConvNet<T>::denoise(std::span<const T> input, std::size_t h, std::size_t w, std::span<T> output) const {
    forward(input, h, w, output);
    if (residual_) {
        for (std::size_t i = 0; i < output.size(); ++i) output[i] = input[i] - output[i];
    }
}

template <typename T>
T ConvNet<T>::loss_and_gradient(std::span<const T> noisy, std::span<const T> clean, std::size_t h, std::size_t w,
                                std::span<T> grad) const {
    const std::size_t hw = h * w;
    if (noisy.size() != hw || clean.size() != hw || grad.size() != params_.size() || hw == 0) {
        throw Error(ErrorCode::ModelShapeMismatch, "training buffer size mismatch");
    }
    const std::size_t pw = w + 2;
    const std::size_t plane = (h + 2) * pw;
    const std::size_t n_layers = shapes_.size();

    // padded_in[l]: padded input of layer l; pre[l]: pre-activation output.
    std::vector<std::vector<T>> padded_in(n_layers);
    std::vector<std::vector<T>> pre(n_layers);
    std::vector<T> act(noisy.begin(), noisy.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& s = shapes_[l];
        padded_in[l].resize(s.in_c * plane);
        pad_replicate(act.data(), s.in_c, h, w, padded_in[l].data());
        pre[l].resize(s.out_c * hw);
        conv3x3(padded_in[l].data(), s.in_c, s.out_c, h, w, params_.data() + s.weight_offset,
                params_.data() + s.bias_offset, pre[l].data());
        act = pre[l];
        if (l + 1 < n_layers) {
            for (auto& v : act) v = std::max(v, T(0));
        }
    }

    // act holds the network output.
    std::vector<T> g_out(hw);
    T loss = 0;
    const T scale = T(2) / static_cast<T>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
        const T y = residual_ ? noisy[i] - act[i] : act[i];
        const T diff = y - clean[i];
        loss += diff * diff;
        g_out[i] = residual_ ? -scale * diff : scale * diff;
    }
    loss /= static_cast<T>(hw);

    std::vector<T> g_padded;
    std::vector<T> g_prev;
    std::vector<T> acc(w);
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& s = shapes_[l];
        if (l + 1 < n_layers) {
            for (std::size_t i = 0; i < g_out.size(); ++i) {
                if (!(pre[l][i] > T(0))) g_out[i] = T(0);
            }
        }
        const T* xp = padded_in[l].data();
        const T* weights = params_.data() + s.weight_offset;
        T* g_w = grad.data() + s.weight_offset;
        T* g_b = grad.data() + s.bias_offset;
        g_padded.assign(s.in_c * plane, T(0));
        for (std::size_t o = 0; o < s.out_c; ++o) {
            const T* go = g_out.data() + o * hw;
            T bsum = 0;
            std::fill(acc.begin(), acc.end(), T(0));
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) acc[x] += go[y * w + x];
            }
            for (T v : acc) bsum += v;
            g_b[o] += bsum;
            for (std::size_t i = 0; i < s.in_c; ++i) {
                const T* src = xp + i * plane;
                T* gsrc = g_padded.data() + i * plane;
                const std::size_t k0 = (o * s.in_c + i) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const T wk = weights[k0 + ky * 3 + kx];
                        std::fill(acc.begin(), acc.end(), T(0));
                        for (std::size_t y = 0; y < h; ++y) {
                            const T* row = src + (y + ky) * pw + kx;
                            T* grow = gsrc + (y + ky) * pw + kx;
                            const T* grow_out = go + y * w;
                            for (std::size_t x = 0; x < w; ++x) {
                                acc[x] += grow_out[x] * row[x];
                                grow[x] += wk * grow_out[x];
                            }
                        }
                        T wsum = 0;
                        for (T v : acc) wsum += v;
                        g_w[k0 + ky * 3 + kx] += wsum;
                    }
                }
            }
        }
        if (l > 0) {
            g_prev.resize(s.in_c * hw);
            fold_replicate(g_padded.data(), s.in_c, h, w, g_prev.data());
            g_out.swap(g_prev);
        }
    }
    return loss;
}

template class ConvNet<float>;
template class ConvNet<double>;

ImageStack cnn_denoise(const ImageStack& stack, const DenoiserModel& model) {
    try {
        model.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ModelShapeMismatch, e.what());
    }
    const ConvNet<float> net(model);
    const Dims d = stack.dims();
    ImageStack out = stack;
    if (d.count() == 0) return out;
    parallel_for(d.nz, [&](std::size_t z) {
        const auto src = stack.slice(z);
        double lo = src[0];
        double hi = src[0];
        for (double v : src) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-20) hi = lo + 1.0;  // constant slice normalizes to zero
        const double span = hi - lo;
        std::vector<float> in(src.size());
        std::vector<float> res(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) in[i] = static_cast<float>((src[i] - lo) / span);
        net.denoise(in, d.ny, d.nx, res);
        auto dst = out.slice(z);
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(res[i]) * span + lo;
    });
    return out;
}

}  // namespace phasor_forge
