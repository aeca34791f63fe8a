#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "phasor_forge/core.hpp"
#include "phasor_forge/phasor.hpp"
#include "phasor_forge/segment.hpp"

namespace phasor_forge {

struct RgbImage {
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::vector<std::uint8_t> data;  // row-major RGB triples

    RgbImage() = default;
    RgbImage(std::size_t rows, std::size_t cols) : ny(rows), nx(cols), data(rows * cols * 3, 0) {}

    Rgb at(std::size_t y, std::size_t x) const {
        const std::size_t i = (y * nx + x) * 3;
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set(std::size_t y, std::size_t x, Rgb c) {
        const std::size_t i = (y * nx + x) * 3;
        data[i] = c.r;
        data[i + 1] = c.g;
        data[i + 2] = c.b;
    }
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// hue in degrees [0, 360), s and v in [0, 1].
Rgb hsv_to_rgb(double hue, double saturation, double value);

// Five-stop black, blue, green, yellow, white ramp for t in [0, 1].
Rgb phasor_colormap(double t);

inline constexpr Rgb kSemicircleColor{160, 160, 160};
inline constexpr Rgb kCentroidColor{255, 0, 255};

/// Lifetime as hue (240 deg at hi, 0 deg at lo) and intensity as value,
/// normalized by the slice maximum. Masked-out lifetimes render black.
RgbImage composite_hsv(const ImageStack& intensity, const LifetimeMap& tau, std::size_t z, double lo_ns,
                       double hi_ns);

/// One raster pixel per histogram bin, s increasing upward. Counts map through
/// (count / max)^gamma onto phasor_colormap; empty bins stay black. The
/// universal semicircle and optional centroid crosses are drawn on top.
RgbImage render_phasor_plot(const PhasorHistogram& hist,
                            const std::optional<std::vector<PhasorPoint>>& centroids = std::nullopt,
                            double gamma = 0.5);

// Raster position of a phasor point; nullopt outside the histogram bounds.
std::optional<std::pair<std::size_t, std::size_t>> phasor_plot_pixel(const PhasorHistogram& hist, double g, double s);

RgbImage render_segmentation(const SegmentationMap& map, std::size_t z,
                             const std::optional<ImageStack>& intensity = std::nullopt);

}  // namespace phasor_forge
