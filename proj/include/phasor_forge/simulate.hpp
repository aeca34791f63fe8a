#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "phasor_forge/core.hpp"

namespace phasor_forge {

// Half-open index ranges.
struct Box {
    std::size_t z0, z1, y0, y1, x0, x1;
};

// Disc of the given radius (pixels) repeated on slices [z0, z1).
struct Disc {
    std::size_t z0, z1;
    double cy, cx, radius;
};

struct Region {
    std::variant<Box, Disc> shape;
    double tau_ns = 0.0;
    double intensity = 1.0;
};

struct Background {
    double tau_ns = 0.0;
    double intensity = 0.0;
};

// Later regions overwrite earlier ones where they overlap.
struct Phantom {
    Dims dims;
    std::vector<Region> regions;
    Background background;

    // Throws RegionOutOfBounds / InvalidArgument.
    void validate() const;
};

struct NoiseSpec {
    double photon_scale = 100.0;
    double gaussian_sigma = 0.05;
    std::uint64_t seed = 0;
};

struct MixerOutputs {
    ImageStack v0;
    ImageStack v_half_pi;
    ImageStack v_pi;
    ImageStack v_three_half_pi;
    ImageStack intensity;
    double omega = kDefaultOmega;
    double gain = 1.0;
    double offset = 0.0;
};

struct DecayCube {
    Dims dims;
    std::size_t n_bins = 0;
    double bin_width = 0.0;  // seconds
    std::vector<double> data;  // (z, y, x, bin), bin innermost

    double period() const { return bin_width * static_cast<double>(n_bins); }
    std::span<const double> pixel(std::size_t i) const {
        return std::span<const double>(data).subspan(i * n_bins, n_bins);
    }
};

struct FdMeasurements {
    ImageStack mod_degree;
    ImageStack phase;  // radians
};

struct PhantomMaps {
    LifetimeMap tau_map;
    ImageStack intensity;
};

// Counter channels used for noise streams.
inline constexpr std::uint32_t kChannelV0 = 0;
inline constexpr std::uint32_t kChannelVHalfPi = 1;
inline constexpr std::uint32_t kChannelVPi = 2;
inline constexpr std::uint32_t kChannelVThreeHalfPi = 3;
inline constexpr std::uint32_t kChannelIntensity = 4;
inline constexpr std::uint32_t kChannelDecayBase = 16;

PhantomMaps render_phantom(const Phantom& phantom);

// Ground-truth classes: one per distinct lifetime among pixels with nonzero
// intensity, numbered by descending lifetime (1 = longest). Zero-intensity
// pixels get 0.
LabelField truth_labels(const Phantom& phantom);

/// Four-phase mixer model V(theta) = gain * I * m * sin(phi + theta) + offset
/// with m = 1/sqrt(1 + (omega tau)^2) and phi = atan(omega tau).
///
/// The four IF channels receive Poisson-Gaussian noise per add_noise. The
/// intensity channel is a photon count and only gets the Poisson stage.
MixerOutputs simulate_mixers(const Phantom& phantom, double omega, double gain, double offset,
                             const NoiseSpec& noise);

/// Noise-free modulation degree and phase of every pixel.
FdMeasurements simulate_fd(const Phantom& phantom, double omega);

/// Steady-state periodic decay, bin k holds
/// I * (exp(-t_k/tau) - exp(-t_{k+1}/tau)) / (1 - exp(-T/tau)), which sums to I over
/// one period. Poisson sampled when photons_per_unit_intensity > 0, otherwise
/// the expectation is returned unscaled.
DecayCube simulate_decay_cube(const Phantom& phantom, std::size_t n_bins, double period,
                              double photons_per_unit_intensity, std::uint64_t seed);

// out = Poisson(photon_scale * max(x, 0)) / photon_scale + N(0, sigma).
// photon_scale == 0 skips the Poisson stage. Intensity stacks are clamped at 0.
ImageStack add_noise(const ImageStack& stack, const NoiseSpec& noise, std::uint32_t channel = 0);

// Single-sample form of add_noise, shared by the simulators.
double noisy_sample(double x, const NoiseSpec& noise, std::uint64_t index, std::uint32_t channel);

// Three nested rectangles (0.5 / 1.5 / 2.5 ns, unit intensity) on a dark background.
Phantom three_tau_phantom(Dims dims);

// Grid of disc-shaped tubules alternating between 1.0 and 2.0 ns with varying
// brightness on a dark background.
Phantom two_cluster_phantom(Dims dims);

// Random boxes and discs with lifetimes in [0.3, 3] ns, for training data.
Phantom random_phantom(Dims dims, std::uint64_t seed);

}  // namespace phasor_forge
