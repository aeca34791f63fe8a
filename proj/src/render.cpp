#include "phasor_forge/render.hpp"

#include <algorithm>
#include <cmath>

namespace phasor_forge {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

double slice_max(const ImageStack& stack, std::size_t z) {
    double peak = 0.0;
    for (double v : stack.slice(z)) peak = std::max(peak, v);
    return peak;
}

}  // namespace

Rgb hsv_to_rgb(double hue, double saturation, double value) {
    hue = std::fmod(hue, 360.0);
    if (hue < 0.0) hue += 360.0;
    const double c = value * saturation;
    const double h = hue / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = value - c;
    return {to_byte(r + m), to_byte(g + m), to_byte(b + m)};
}

Rgb phasor_colormap(double t) {
    static constexpr double kStops[5][3] = {
        {0, 0, 0}, {0, 0, 255}, {0, 255, 0}, {255, 255, 0}, {255, 255, 255},
    };
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(t));
    const double f = t - static_cast<double>(i);
    auto lerp = [&](int c) {
        return static_cast<std::uint8_t>(std::lround(kStops[i][c] + (kStops[i + 1][c] - kStops[i][c]) * f));
    };
    return {lerp(0), lerp(1), lerp(2)};
}

RgbImage composite_hsv(const ImageStack& intensity, const LifetimeMap& tau, std::size_t z, double lo_ns,
                       double hi_ns) {
    if (!(hi_ns > lo_ns)) throw Error(ErrorCode::InvalidArgument, "tau range needs hi > lo");
    if (!(intensity.dims() == tau.tau.dims()) || tau.mask.size() != tau.tau.size()) {
        throw Error(ErrorCode::InvalidArgument, "intensity and lifetime dims differ");
    }
    const Dims d = intensity.dims();
    if (z >= d.nz) throw Error(ErrorCode::InvalidArgument, "slice index out of range");
    const double peak = slice_max(intensity, z);
    RgbImage img(d.ny, d.nx);
    for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
            const std::size_t i = d.index(z, y, x);
            if (!tau.mask[i] || peak <= 0.0) continue;
            const double t = std::clamp((tau.tau[i] - lo_ns) / (hi_ns - lo_ns), 0.0, 1.0);
            img.set(y, x, hsv_to_rgb(240.0 * t, 1.0, intensity[i] / peak));
        }
    }
    return img;
}

std::optional<std::pair<std::size_t, std::size_t>> phasor_plot_pixel(const PhasorHistogram& hist, double g, double s) {
    const auto& b = hist.bounds;
    if (g < b.g_min || g > b.g_max || s < b.s_min || s > b.s_max) return std::nullopt;
    const auto ig = std::min(hist.nb_g - 1, static_cast<std::size_t>((g - b.g_min) / (b.g_max - b.g_min) *
                                                                       static_cast<double>(hist.nb_g)));
    const auto is = std::min(hist.nb_s - 1, static_cast<std::size_t>((s - b.s_min) / (b.s_max - b.s_min) *
                                                                       static_cast<double>(hist.nb_s)));
    return std::pair{hist.nb_s - 1 - is, ig};
}

RgbImage render_phasor_plot(const PhasorHistogram& hist, const std::optional<std::vector<PhasorPoint>>& centroids,
                            double gamma) {
    if (hist.nb_g < 1 || hist.nb_s < 1 || hist.counts.size() != hist.nb_g * hist.nb_s) {
        throw Error(ErrorCode::InvalidArgument, "malformed histogram");
    }
    if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be > 0");
    RgbImage img(hist.nb_s, hist.nb_g);
    const double peak = *std::max_element(hist.counts.begin(), hist.counts.end());
    if (peak > 0.0) {
        for (std::size_t is = 0; is < hist.nb_s; ++is) {
            for (std::size_t ig = 0; ig < hist.nb_g; ++ig) {
                const double c = hist.at(ig, is);
                if (c <= 0.0) continue;
                img.set(hist.nb_s - 1 - is, ig, phasor_colormap(std::pow(c / peak, gamma)));
            }
        }
    }

    const auto& b = hist.bounds;
    const double dg = (b.g_max - b.g_min) / static_cast<double>(hist.nb_g);
    const double ds = (b.s_max - b.s_min) / static_cast<double>(hist.nb_s);
    auto plot = [&](double g, double s) {
        if (auto px = phasor_plot_pixel(hist, g, s)) img.set(px->first, px->second, kSemicircleColor);
    };
    // Sample by column and by row so steep parts of the arc stay connected.
    for (std::size_t ig = 0; ig < hist.nb_g; ++ig) {
        const double g = b.g_min + (static_cast<double>(ig) + 0.5) * dg;
        const double r2 = 0.25 - (g - 0.5) * (g - 0.5);
        if (r2 >= 0.0) plot(g, std::sqrt(r2));
    }
    for (std::size_t is = 0; is < hist.nb_s; ++is) {
        const double s = b.s_min + (static_cast<double>(is) + 0.5) * ds;
        const double r2 = 0.25 - s * s;
        if (r2 < 0.0) continue;
        plot(0.5 - std::sqrt(r2), s);
        plot(0.5 + std::sqrt(r2), s);
    }

    if (centroids) {
        for (const auto& c : *centroids) {
            const auto px = phasor_plot_pixel(hist, c.g, c.s);
            if (!px) continue;
            const auto [row, col] = *px;
            for (int off = -2; off <= 2; ++off) {
                const auto r = static_cast<long>(row) + off;
                const auto q = static_cast<long>(col) + off;
                if (r >= 0 && r < static_cast<long>(img.ny)) img.set(static_cast<std::size_t>(r), col, kCentroidColor);
                if (q >= 0 && q < static_cast<long>(img.nx)) img.set(row, static_cast<std::size_t>(q), kCentroidColor);
            }
        }
    }
    return img;
}

RgbImage render_segmentation(const SegmentationMap& map, std::size_t z, const std::optional<ImageStack>& intensity) {
    const Dims d = map.labels.dims;
    if (z >= d.nz) throw Error(ErrorCode::InvalidArgument, "slice index out of range");
    if (intensity && !(intensity->dims() == d)) throw Error(ErrorCode::InvalidArgument, "intensity dims differ");
    std::size_t max_label = 0;
    for (auto l : map.labels.labels) max_label = std::max<std::size_t>(max_label, l);
    if (max_label > map.palette.size()) throw Error(ErrorCode::PaletteTooSmall, "palette does not cover all labels");
    const double peak = intensity ? slice_max(*intensity, z) : 1.0;
    RgbImage img(d.ny, d.nx);
    for (std::size_t y = 0; y < d.ny; ++y) {
        for (std::size_t x = 0; x < d.nx; ++x) {
            const std::size_t i = d.index(z, y, x);
            const auto label = map.labels.labels[i];
            if (label == 0) continue;
            const Rgb c = map.palette[label - 1];
            if (!intensity) {
                img.set(y, x, c);
                continue;
            }
            const double v = peak > 0.0 ? std::clamp((*intensity)[i] / peak, 0.0, 1.0) : 0.0;
            img.set(y, x, {to_byte(c.r / 255.0 * v), to_byte(c.g / 255.0 * v), to_byte(c.b / 255.0 * v)});
        }
    }
    return img;
}

}  // namespace phasor_forge
