#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "phasor_forge/core.hpp"
#include "phasor_forge/simulate.hpp"

namespace phasor_forge {

// Reference fluorophore of known lifetime and its measured phasor.
struct CalibrationRef {
    double tau_ref = 0.0;  // seconds
    double measured_g = 0.0;
    double measured_s = 0.0;
};

struct HistogramBounds {
    double g_min = 0.0;
    double g_max = 1.0;
    double s_min = 0.0;
    double s_max = 0.6;
};

struct PhasorHistogram {
    std::size_t nb_g = 256;
    std::size_t nb_s = 154;
    HistogramBounds bounds;
    std::vector<double> counts;  // s-major: counts[is * nb_g + ig]
    double overflow = 0.0;

    double at(std::size_t ig, std::size_t is) const { return counts[is * nb_g + ig]; }
    double total() const;
};

struct MixerPhasorOptions {
    // Pixels below this fraction of the maximum intensity are masked out.
    double intensity_threshold = 0.01;
};

/// Phasor field from the four mixer channels:
/// S_raw = V(0) - V(pi), G_raw = V(pi/2) - V(3pi/2).
///
/// Without calibration the pair is divided by 2 * gain * I. With a calibration
/// reference the pair is divided by I and then rotated and scaled so that the
/// reference's measured phasor lands on its semicircle point. An empty
/// intensity stack disables both the division and the intensity mask.
/// Masked-out pixels carry g = s = 0.
PhasorField phasor_from_mixers(const MixerOutputs& m, const std::optional<CalibrationRef>& cal = std::nullopt,
                               const MixerPhasorOptions& opts = {});

// Mean (G_raw / I, S_raw / I) over masked-in pixels, i.e. the measured phasor
// that phasor_from_mixers calibrates against.
CalibrationRef measure_reference(const MixerOutputs& m, double tau_ref, const MixerPhasorOptions& opts = {});

/// Midpoint-rule phasor of each decay at angular frequency harmonic * omega.
/// The returned field carries the effective frequency harmonic * omega.
PhasorField phasor_from_decay(const DecayCube& cube, double omega, int harmonic = 1);

PhasorField phasor_from_fd(const ImageStack& mod_degree, const ImageStack& phase, double omega);

LifetimeMap lifetime_map(const PhasorField& field, double eps_g = kEpsG);

PhasorHistogram phasor_histogram(const PhasorField& field, std::size_t nb_g = 256, std::size_t nb_s = 154,
                                 const HistogramBounds& bounds = {},
                                 const std::optional<ImageStack>& weights = std::nullopt);

}  // namespace phasor_forge
