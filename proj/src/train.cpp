#include <algorithm>
#include <cmath>
#include <limits>

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/parallel.hpp"
#include "phasor_forge/rng.hpp"

namespace phasor_forge {

namespace {

constexpr std::uint32_t kPatchChannel = 0x7a7cu;

struct Slice {
    std::size_t ny, nx;
    std::vector<float> noisy;
    std::vector<float> clean;
};

std::vector<Slice> normalized_slices(const std::vector<ImagePair>& pairs, std::size_t begin, std::size_t end) {
    std::vector<Slice> out;
    for (std::size_t p = begin; p < end; ++p) {
        const auto& [noisy, clean] = pairs[p];
        const Dims d = noisy.dims();
        for (std::size_t z = 0; z < d.nz; ++z) {
            const auto src = noisy.slice(z);
            const auto ref = clean.slice(z);
            const auto [mn, mx] = std::minmax_element(src.begin(), src.end());
            const double lo = *mn;
            const double span = (*mx - lo) < 1e-20 ? 1.0 : (*mx - lo);
            Slice s{d.ny, d.nx, std::vector<float>(src.size()), std::vector<float>(src.size())};
            for (std::size_t i = 0; i < src.size(); ++i) {
                s.noisy[i] = static_cast<float>((src[i] - lo) / span);
                s.clean[i] = static_cast<float>((ref[i] - lo) / span);
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

// Mean full-image loss, accumulated in slice order.
double evaluate(const ConvNet<float>& net, const std::vector<Slice>& slices) {
    std::vector<double> per(slices.size());
    parallel_for(slices.size(), [&](std::size_t i) {
        const auto& s = slices[i];
        std::vector<float> out(s.noisy.size());
        net.denoise(s.noisy, s.ny, s.nx, out);
        double acc = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double d = static_cast<double>(out[k]) - s.clean[k];
            acc += d * d;
        }
        per[i] = acc / static_cast<double>(out.size());
    });
    double total = 0.0;
    for (double v : per) total += v;
    return total / static_cast<double>(slices.size());
}

void validate_inputs(const std::vector<ImagePair>& pairs, const TrainConfig& cfg) {
    if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "training needs at least one pair");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.patch_size < 1 || !(cfg.learning_rate >= 0.0) ||
        !(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "invalid training configuration");
    }
    for (const auto& [noisy, clean] : pairs) {
        if (!(noisy.dims() == clean.dims())) throw Error(ErrorCode::InvalidArgument, "pair dims differ");
        const Dims d = noisy.dims();
        if (d.count() == 0) throw Error(ErrorCode::InvalidArgument, "empty training image");
        if (static_cast<std::size_t>(cfg.patch_size) > std::min(d.ny, d.nx)) {
            throw Error(ErrorCode::InvalidArgument, "patch_size exceeds image size");
        }
    }
}

}  // namespace

TrainResult train_denoiser(const std::vector<ImagePair>& pairs, const TrainConfig& cfg) {
    return train_denoiser(pairs, cfg, make_denoiser_model(cfg.architecture, cfg.seed));
}

TrainResult train_denoiser(const std::vector<ImagePair>& pairs, const TrainConfig& cfg, DenoiserModel initial) {
    validate_inputs(pairs, cfg);
    initial.validate();

    const std::size_t n_val = pairs.size() >= 2 ? (pairs.size() + 7) / 8 : 0;
    const std::size_t n_train = pairs.size() - n_val;
    const auto train = normalized_slices(pairs, 0, n_train);
    const auto val = n_val > 0 ? normalized_slices(pairs, n_train, pairs.size()) : train;

    const auto patch = static_cast<std::size_t>(cfg.patch_size);
    std::size_t patches_per_epoch = 0;
    for (const auto& s : train) patches_per_epoch += ((s.ny + patch - 1) / patch) * ((s.nx + patch - 1) / patch);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches_per_epoch = std::max<std::size_t>(1, (patches_per_epoch + batch - 1) / batch);

    ConvNet<float> net(initial);
    const std::size_t n_params = net.parameter_count();
    std::vector<float> velocity(n_params, 0.0f);
    std::vector<std::vector<float>> patch_grads(batch, std::vector<float>(n_params));
    std::vector<double> patch_loss(batch);

    TrainResult result;
    result.model = initial;
    double best = evaluate(net, val);
    if (!std::isfinite(best)) throw Error(ErrorCode::DivergedLoss, "initial validation loss is not finite");
    result.validation_loss.push_back(best);
    result.train_loss.push_back(evaluate(net, train));

    std::uint64_t draw = 0;
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto mu = static_cast<float>(cfg.momentum);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            struct PatchRef {
                std::size_t slice, y0, x0;
            };
            std::vector<PatchRef> refs(batch);
            for (auto& r : refs) {
                CounterStream stream(cfg.seed, draw++, kPatchChannel);
                r.slice = static_cast<std::size_t>(stream.uniform() * static_cast<double>(train.size()));
                const auto& s = train[r.slice];
                r.y0 = static_cast<std::size_t>(stream.uniform() * static_cast<double>(s.ny - patch + 1));
                r.x0 = static_cast<std::size_t>(stream.uniform() * static_cast<double>(s.nx - patch + 1));
            }
            parallel_for(batch, [&](std::size_t p) {
                const auto& r = refs[p];
                const auto& s = train[r.slice];
                std::vector<float> noisy(patch * patch);
                std::vector<float> clean(patch * patch);
                for (std::size_t y = 0; y < patch; ++y) {
                    const std::size_t off = (r.y0 + y) * s.nx + r.x0;
                    std::copy_n(s.noisy.begin() + static_cast<std::ptrdiff_t>(off), patch, noisy.begin() + y * patch);
                    std::copy_n(s.clean.begin() + static_cast<std::ptrdiff_t>(off), patch, clean.begin() + y * patch);
                }
                auto& g = patch_grads[p];
                std::fill(g.begin(), g.end(), 0.0f);
                patch_loss[p] = net.loss_and_gradient(noisy, clean, patch, patch, g);
            });
            double batch_loss = 0.0;
            for (double l : patch_loss) batch_loss += l;
            if (!std::isfinite(batch_loss)) throw Error(ErrorCode::DivergedLoss, "batch loss is not finite");

            auto params = net.parameters();
            const float inv_batch = 1.0f / static_cast<float>(batch);
            for (std::size_t k = 0; k < n_params; ++k) {
                float g = 0.0f;
                for (std::size_t p = 0; p < batch; ++p) g += patch_grads[p][k];
                velocity[k] = mu * velocity[k] - lr * g * inv_batch;
                params[k] += velocity[k];
            }
        }
        const double v = evaluate(net, val);
        if (!std::isfinite(v)) throw Error(ErrorCode::DivergedLoss, "validation loss is not finite");
        result.validation_loss.push_back(v);
        result.train_loss.push_back(n_val > 0 ? evaluate(net, train) : v);
        if (v < best) {
            best = v;
            result.best_epoch = epoch;
            result.model = net.to_model();
        }
    }
    return result;
}

}  // namespace phasor_forge
