#include "phasor_forge/denoise.hpp"

namespace phasor_forge {

namespace {

ImageStack apply(const ImageStack& stack, const Mask& mask, const DenoiseMethod& method) {
    if (const auto* median = std::get_if<MedianMethod>(&method)) {
        return masked_median_filter(stack, mask, median->passes, median->window);
    }
    return cnn_denoise(stack, std::get<CnnMethod>(method).model);
}

}  // namespace

PhasorField denoise_phasor(const PhasorField& field, const DenoiseMethod& method) {
    field.validate();
    PhasorField out;
    out.omega = field.omega;
    out.mask = field.mask;
    out.g = apply(field.g, field.mask, method);
    out.s = apply(field.s, field.mask, method);
    for (std::size_t i = 0; i < out.mask.size(); ++i) {
        if (!out.mask[i]) {
            out.g[i] = 0.0;
            out.s[i] = 0.0;
        }
    }
    return out;
}

}  // namespace phasor_forge
