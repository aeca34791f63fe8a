#include "phasor_forge/phasor.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "phasor_forge/parallel.hpp"

namespace phasor_forge {

namespace {

void check_same_dims(const MixerOutputs& m) {
    const Dims d = m.v0.dims();
    if (!(m.v_half_pi.dims() == d) || !(m.v_pi.dims() == d) || !(m.v_three_half_pi.dims() == d) ||
        (m.intensity.size() != 0 && !(m.intensity.dims() == d))) {
        throw Error(ErrorCode::InvalidArgument, "mixer channels differ in dims");
    }
}

Mask intensity_mask(const MixerOutputs& m, const MixerPhasorOptions& opts) {
    const std::size_t n = m.v0.size();
    Mask mask(n, 1);
    if (m.intensity.size() == 0) return mask;
    double peak = 0.0;
    for (double v : m.intensity.values()) peak = std::max(peak, v);
    const double threshold = opts.intensity_threshold * peak;
    for (std::size_t i = 0; i < n; ++i) {
        mask[i] = (m.intensity[i] > 0.0 && m.intensity[i] >= threshold) ? 1 : 0;
    }
    return mask;
}

}  // namespace

double PhasorHistogram::total() const {
    double t = 0.0;
    for (double c : counts) t += c;
    return t;
}

CalibrationRef measure_reference(const MixerOutputs& m, double tau_ref, const MixerPhasorOptions& opts) {
    check_same_dims(m);
    const Mask mask = intensity_mask(m, opts);
    const bool have_intensity = m.intensity.size() != 0;
    double sum_g = 0.0;
    double sum_s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        const double scale = have_intensity ? 1.0 / m.intensity[i] : 1.0;
        sum_g += (m.v_half_pi[i] - m.v_three_half_pi[i]) * scale;
        sum_s += (m.v0[i] - m.v_pi[i]) * scale;
        ++count;
    }
    if (count == 0) throw Error(ErrorCode::ZeroReference, "no valid reference pixels");
    return {tau_ref, sum_g / static_cast<double>(count), sum_s / static_cast<double>(count)};
}

PhasorField phasor_from_mixers(const MixerOutputs& m, const std::optional<CalibrationRef>& cal,
                               const MixerPhasorOptions& opts) {
    check_same_dims(m);
    const Dims d = m.v0.dims();
    const bool have_intensity = m.intensity.size() != 0;

    std::complex<double> rotation{1.0, 0.0};
    double norm = 1.0;
    if (cal) {
        const std::complex<double> measured{cal->measured_g, cal->measured_s};
        if (std::abs(measured) < 1e-12) throw Error(ErrorCode::ZeroReference, "reference phasor magnitude < 1e-12");
        const auto [g_ref, s_ref] = phasor_from_lifetime(cal->tau_ref, m.omega);
        rotation = std::complex<double>{g_ref, s_ref} / measured;
    } else if (have_intensity) {
        if (!(m.gain > 0.0)) throw Error(ErrorCode::InvalidArgument, "gain must be > 0");
        norm = 1.0 / (2.0 * m.gain);
    }

    PhasorField field;
    field.omega = m.omega;
    field.mask = intensity_mask(m, opts);
    std::vector<double> g(d.count(), 0.0);
    std::vector<double> s(d.count(), 0.0);
    parallel_for(d.nz, [&](std::size_t z) {
        for (std::size_t i = z * d.slice_size(); i < (z + 1) * d.slice_size(); ++i) {
            if (!field.mask[i]) continue;
            const double scale = norm / (have_intensity ? m.intensity[i] : 1.0);
            std::complex<double> p{(m.v_half_pi[i] - m.v_three_half_pi[i]) * scale, (m.v0[i] - m.v_pi[i]) * scale};
            if (cal) p *= rotation;
            if (!std::isfinite(p.real()) || !std::isfinite(p.imag())) {
                field.mask[i] = 0;
                continue;
            }
            g[i] = p.real();
            s[i] = p.imag();
        }
    });
    field.g = ImageStack(d, ValueKind::g, std::move(g));
    field.s = ImageStack(d, ValueKind::s, std::move(s));
    return field;
}

PhasorField phasor_from_decay(const DecayCube& cube, double omega, int harmonic) {
    if (!(omega > 0.0) || harmonic < 1) throw Error(ErrorCode::InvalidArgument, "omega > 0 and harmonic >= 1 required");
    if (cube.n_bins == 0 || cube.data.size() != cube.dims.count() * cube.n_bins) {
        throw Error(ErrorCode::LengthMismatch, "decay cube data length mismatch");
    }
    const double w = omega * harmonic;
    const double cycles = w * cube.period() / (2.0 * std::numbers::pi);
    if (std::abs(cycles - std::round(cycles)) > 1e-6 * std::max(1.0, cycles) || std::round(cycles) < 1.0) {
        throw Error(ErrorCode::InvalidArgument, "harmonic * omega must complete an integer number of cycles per period");
    }
    std::vector<double> cos_t(cube.n_bins);
    std::vector<double> sin_t(cube.n_bins);
    for (std::size_t k = 0; k < cube.n_bins; ++k) {
        const double t = (static_cast<double>(k) + 0.5) * cube.bin_width;
        cos_t[k] = std::cos(w * t);
        sin_t[k] = std::sin(w * t);
    }
    const Dims d = cube.dims;
    PhasorField field;
    field.omega = w;
    field.mask.assign(d.count(), 0);
    std::vector<double> g(d.count(), 0.0);
    std::vector<double> s(d.count(), 0.0);
    parallel_for(d.nz, [&](std::size_t z) {
        for (std::size_t i = z * d.slice_size(); i < (z + 1) * d.slice_size(); ++i) {
            const auto decay = cube.pixel(i);
            double total = 0.0;
            double acc_c = 0.0;
            double acc_s = 0.0;
            for (std::size_t k = 0; k < decay.size(); ++k) {
                total += decay[k];
                acc_c += decay[k] * cos_t[k];
                acc_s += decay[k] * sin_t[k];
            }
            if (!(total > 0.0)) continue;
            g[i] = acc_c / total;
            s[i] = acc_s / total;
            field.mask[i] = 1;
        }
    });
    field.g = ImageStack(d, ValueKind::g, std::move(g));
    field.s = ImageStack(d, ValueKind::s, std::move(s));
    return field;
}

PhasorField phasor_from_fd(const ImageStack& mod_degree, const ImageStack& phase, double omega) {
    if (!(mod_degree.dims() == phase.dims())) throw Error(ErrorCode::InvalidArgument, "m and phi dims differ");
    if (!(omega > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega must be > 0");
    const std::size_t n = mod_degree.size();
    std::vector<double> g(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (mod_degree[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative modulation degree");
        g[i] = mod_degree[i] * std::cos(phase[i]);
        s[i] = mod_degree[i] * std::sin(phase[i]);
    }
    PhasorField field;
    field.g = ImageStack(mod_degree.dims(), ValueKind::g, std::move(g));
    field.s = ImageStack(mod_degree.dims(), ValueKind::s, std::move(s));
    field.omega = omega;
    field.mask.assign(n, 1);
    return field;
}

LifetimeMap lifetime_map(const PhasorField& field, double eps_g) {
    field.validate();
    const std::size_t n = field.g.size();
    std::vector<double> tau(n, 0.0);
    LifetimeMap out;
    out.mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!field.mask[i] || !(std::abs(field.g[i]) >= eps_g)) continue;
        const double t = s_to_ns(field.s[i] / (field.omega * field.g[i]));
        if (!std::isfinite(t)) continue;
        tau[i] = t;
        out.mask[i] = 1;
    }
    out.tau = ImageStack(field.dims(), ValueKind::lifetime_ns, std::move(tau));
    return out;
}

PhasorHistogram phasor_histogram(const PhasorField& field, std::size_t nb_g, std::size_t nb_s,
                                 const HistogramBounds& bounds, const std::optional<ImageStack>& weights) {
    if (nb_g < 1 || nb_s < 1) throw Error(ErrorCode::InvalidArgument, "histogram needs >= 1 bin per axis");
    if (!(bounds.g_max > bounds.g_min) || !(bounds.s_max > bounds.s_min)) {
        throw Error(ErrorCode::InvalidArgument, "degenerate histogram bounds");
    }
    if (weights && !(weights->dims() == field.dims())) {
        throw Error(ErrorCode::InvalidArgument, "weight stack dims differ from field");
    }
    field.validate();
    PhasorHistogram hist;
    hist.nb_g = nb_g;
    hist.nb_s = nb_s;
    hist.bounds = bounds;
    hist.counts.assign(nb_g * nb_s, 0.0);
    const double sg = static_cast<double>(nb_g) / (bounds.g_max - bounds.g_min);
    const double ss = static_cast<double>(nb_s) / (bounds.s_max - bounds.s_min);
    for (std::size_t i = 0; i < field.mask.size(); ++i) {
        if (!field.mask[i]) continue;
        const double w = weights ? (*weights)[i] : 1.0;
        const double g = field.g[i];
        const double s = field.s[i];
        if (g < bounds.g_min || g > bounds.g_max || s < bounds.s_min || s > bounds.s_max) {
            hist.overflow += w;
            continue;
        }
        const auto ig = std::min(nb_g - 1, static_cast<std::size_t>((g - bounds.g_min) * sg));
        const auto is = std::min(nb_s - 1, static_cast<std::size_t>((s - bounds.s_min) * ss));
        hist.counts[is * nb_g + ig] += w;
    }
    return hist;
}

}  // namespace phasor_forge
