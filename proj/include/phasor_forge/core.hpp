#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "phasor_forge/error.hpp"

namespace phasor_forge {

inline constexpr double kDefaultModulationHz = 80e6;
inline constexpr double kEpsG = 1e-12;

constexpr double omega_from_frequency(double f_mod_hz) { return 2.0 * std::numbers::pi * f_mod_hz; }
inline constexpr double kDefaultOmega = omega_from_frequency(kDefaultModulationHz);

constexpr double ns_to_s(double ns) { return ns * 1e-9; }
constexpr double s_to_ns(double s) { return s * 1e9; }

struct Dims {
    std::size_t nz = 0;
    std::size_t ny = 0;
    std::size_t nx = 0;

    constexpr std::size_t count() const { return nz * ny * nx; }
    constexpr std::size_t slice_size() const { return ny * nx; }
    constexpr std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
        return (z * ny + y) * nx + x;
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

enum class ValueKind : std::uint8_t { intensity, g, s, lifetime_ns, generic };

// Row-major (z, y, x) scalar volume. Values are held in double precision;
// the on-disk representation is float32 (see io.hpp).
class ImageStack {
public:
    ImageStack() = default;
    ImageStack(Dims dims, ValueKind kind, double fill = 0.0);
    // Validates length, finiteness and (for intensity) non-negativity.
    ImageStack(Dims dims, ValueKind kind, std::vector<double> data);

    const Dims& dims() const { return dims_; }
    ValueKind kind() const { return kind_; }
    std::size_t size() const { return data_.size(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t z, std::size_t y, std::size_t x) const { return data_[dims_.index(z, y, x)]; }
    double& at(std::size_t z, std::size_t y, std::size_t x) { return data_[dims_.index(z, y, x)]; }

    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }
    std::span<const double> slice(std::size_t z) const;
    std::span<double> slice(std::size_t z);

    ImageStack with_kind(ValueKind kind) const;

    friend bool operator==(const ImageStack&, const ImageStack&) = default;

private:
    Dims dims_;
    ValueKind kind_ = ValueKind::generic;
    std::vector<double> data_;
};

using Mask = std::vector<std::uint8_t>;

// 0 = unlabeled / background, 1..K = class.
struct LabelField {
    Dims dims;
    std::vector<std::uint8_t> labels;
};

struct PhasorField {
    ImageStack g;
    ImageStack s;
    double omega = kDefaultOmega;
    Mask mask;

    const Dims& dims() const { return g.dims(); }
    std::size_t valid_count() const;
    // Throws InvalidArgument when dims disagree, omega <= 0 or a masked-in value is non-finite.
    void validate() const;
};

struct LifetimeMap {
    ImageStack tau;  // nanoseconds
    Mask mask;
};

struct NormalizationRecord {
    double lo = 0.0;
    double hi = 1.0;
};

struct NormalizedStack {
    ImageStack stack;
    NormalizationRecord record;
    bool constant = false;  // range collapsed; stack is all zero, record is (lo, lo + 1)
};

/// Mono-exponential lifetime in seconds from a phasor point, tau = s / (omega g).
/// Throws DegeneratePhasor when |g| < eps_g.
double lifetime_from_phasor(double g, double s, double omega, double eps_g = kEpsG);

/// Semicircle point of a mono-exponential decay with lifetime tau (seconds).
std::pair<double, double> phasor_from_lifetime(double tau, double omega);

/// Min-max normalization over masked-in pixels (all pixels when mask is empty).
NormalizedStack normalize_stack(const ImageStack& stack, const Mask& mask = {});
ImageStack denormalize_stack(const ImageStack& stack, const NormalizationRecord& rec);

}  // namespace phasor_forge
