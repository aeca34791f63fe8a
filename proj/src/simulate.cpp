#include "phasor_forge/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "phasor_forge/parallel.hpp"
#include "phasor_forge/rng.hpp"

namespace phasor_forge {

namespace {

bool covers(const Region& region, std::size_t z, std::size_t y, std::size_t x) {
    if (const auto* box = std::get_if<Box>(&region.shape)) {
        return z >= box->z0 && z < box->z1 && y >= box->y0 && y < box->y1 && x >= box->x0 && x < box->x1;
    }
    const auto& disc = std::get<Disc>(region.shape);
    if (z < disc.z0 || z >= disc.z1) return false;
    const double dy = static_cast<double>(y) - disc.cy;
    const double dx = static_cast<double>(x) - disc.cx;
    return dy * dy + dx * dx <= disc.radius * disc.radius;
}

struct PixelTruth {
    double tau_ns;
    double intensity;
};

// Per-pixel (tau, intensity) lookup, last region wins.
std::vector<PixelTruth> rasterize(const Phantom& phantom) {
    phantom.validate();
    const Dims d = phantom.dims;
    std::vector<PixelTruth> px(d.count(), {phantom.background.tau_ns, phantom.background.intensity});
    for (const auto& region : phantom.regions) {
        for (std::size_t z = 0; z < d.nz; ++z) {
            for (std::size_t y = 0; y < d.ny; ++y) {
                for (std::size_t x = 0; x < d.nx; ++x) {
                    if (covers(region, z, y, x)) px[d.index(z, y, x)] = {region.tau_ns, region.intensity};
                }
            }
        }
    }
    return px;
}

}  // namespace

void Phantom::validate() const {
    if (dims.count() == 0) throw Error(ErrorCode::InvalidArgument, "phantom dims must be positive");
    if (!(background.intensity >= 0.0) || !(background.tau_ns >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "background tau and intensity must be >= 0");
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& region = regions[r];
        const std::string where = "region " + std::to_string(r);
        if (!(region.intensity >= 0.0) || !(region.tau_ns >= 0.0)) {
            throw Error(ErrorCode::InvalidArgument, where + ": tau and intensity must be >= 0");
        }
        if (const auto* box = std::get_if<Box>(&region.shape)) {
            if (box->z0 >= box->z1 || box->y0 >= box->y1 || box->x0 >= box->x1 || box->z1 > dims.nz ||
                box->y1 > dims.ny || box->x1 > dims.nx) {
                throw Error(ErrorCode::RegionOutOfBounds, where + ": box outside volume");
            }
        } else {
            const auto& disc = std::get<Disc>(region.shape);
            const double ny = static_cast<double>(dims.ny);
            const double nx = static_cast<double>(dims.nx);
            if (disc.z0 >= disc.z1 || disc.z1 > dims.nz || !(disc.radius >= 0.0) || disc.cy - disc.radius < 0.0 ||
                disc.cx - disc.radius < 0.0 || disc.cy + disc.radius > ny - 1.0 || disc.cx + disc.radius > nx - 1.0) {
                throw Error(ErrorCode::RegionOutOfBounds, where + ": disc outside volume");
            }
        }
    }
}

PhantomMaps render_phantom(const Phantom& phantom) {
    const auto px = rasterize(phantom);
    std::vector<double> tau(px.size());
    std::vector<double> intensity(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        tau[i] = px[i].tau_ns;
        intensity[i] = px[i].intensity;
    }
    PhantomMaps out;
    out.tau_map.tau = ImageStack(phantom.dims, ValueKind::lifetime_ns, std::move(tau));
    out.tau_map.mask.assign(px.size(), 1);
    out.intensity = ImageStack(phantom.dims, ValueKind::intensity, std::move(intensity));
    return out;
}

LabelField truth_labels(const Phantom& phantom) {
    const auto px = rasterize(phantom);
    std::vector<double> taus;
    for (const auto& p : px) {
        if (p.intensity > 0.0) taus.push_back(p.tau_ns);
    }
    std::sort(taus.begin(), taus.end(), std::greater<>());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    if (taus.size() > 255) throw Error(ErrorCode::InvalidArgument, "more than 255 distinct lifetimes");
    LabelField out{phantom.dims, std::vector<std::uint8_t>(px.size(), 0)};
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!(px[i].intensity > 0.0)) continue;
        const auto it = std::find(taus.begin(), taus.end(), px[i].tau_ns);
        out.labels[i] = static_cast<std::uint8_t>(1 + (it - taus.begin()));
    }
    return out;
}

double noisy_sample(double x, const NoiseSpec& noise, std::uint64_t index, std::uint32_t channel) {
    if (noise.photon_scale <= 0.0 && noise.gaussian_sigma <= 0.0) return x;
    CounterStream stream(noise.seed, index, channel);
    double out = x;
    if (noise.photon_scale > 0.0) {
        out = static_cast<double>(stream.poisson(noise.photon_scale * std::max(x, 0.0))) / noise.photon_scale;
    }
    if (noise.gaussian_sigma > 0.0) out += noise.gaussian_sigma * stream.normal();
    return out;
}

ImageStack add_noise(const ImageStack& stack, const NoiseSpec& noise, std::uint32_t channel) {
    if (noise.photon_scale < 0.0 || noise.gaussian_sigma < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "noise parameters must be >= 0");
    }
    const Dims d = stack.dims();
    std::vector<double> out(stack.size());
    const bool clamp = stack.kind() == ValueKind::intensity;
    parallel_for(d.nz, [&](std::size_t z) {
        const std::size_t base = z * d.slice_size();
        for (std::size_t i = base; i < base + d.slice_size(); ++i) {
            const double v = noisy_sample(stack[i], noise, i, channel);
            out[i] = clamp ? std::max(v, 0.0) : v;
        }
    });
    return ImageStack(d, stack.kind(), std::move(out));
}

MixerOutputs simulate_mixers(const Phantom& phantom, double omega, double gain, double offset,
                             const NoiseSpec& noise) {
    if (!(omega > 0.0) || !(gain > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega and gain must be > 0");
    if (noise.photon_scale < 0.0 || noise.gaussian_sigma < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "noise parameters must be >= 0");
    }
    const auto px = rasterize(phantom);
    const Dims d = phantom.dims;
    const std::size_t n = d.count();
    std::vector<double> ch[4];
    for (auto& c : ch) c.resize(n);
    std::vector<double> intensity(n);
    const NoiseSpec photon_only{noise.photon_scale, 0.0, noise.seed};
    constexpr double kPhase[4] = {0.0, 0.5 * std::numbers::pi, std::numbers::pi, 1.5 * std::numbers::pi};

    parallel_for(d.nz, [&](std::size_t z) {
        for (std::size_t i = z * d.slice_size(); i < (z + 1) * d.slice_size(); ++i) {
            const double wt = omega * ns_to_s(px[i].tau_ns);
            const double m = 1.0 / std::sqrt(1.0 + wt * wt);
            const double phi = std::atan(wt);
            const double amp = gain * px[i].intensity * m;
            for (std::uint32_t c = 0; c < 4; ++c) {
                const double clean = amp * std::sin(phi + kPhase[c]) + offset;
                ch[c][i] = noisy_sample(clean, noise, i, kChannelV0 + c);
            }
            intensity[i] = std::max(0.0, noisy_sample(px[i].intensity, photon_only, i, kChannelIntensity));
        }
    });

    MixerOutputs out;
    out.v0 = ImageStack(d, ValueKind::generic, std::move(ch[0]));
    out.v_half_pi = ImageStack(d, ValueKind::generic, std::move(ch[1]));
    out.v_pi = ImageStack(d, ValueKind::generic, std::move(ch[2]));
    out.v_three_half_pi = ImageStack(d, ValueKind::generic, std::move(ch[3]));
    out.intensity = ImageStack(d, ValueKind::intensity, std::move(intensity));
    out.omega = omega;
    out.gain = gain;
    out.offset = offset;
    return out;
}

FdMeasurements simulate_fd(const Phantom& phantom, double omega) {
    if (!(omega > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega must be > 0");
    const auto px = rasterize(phantom);
    std::vector<double> m(px.size());
    std::vector<double> phi(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double wt = omega * ns_to_s(px[i].tau_ns);
        m[i] = 1.0 / std::sqrt(1.0 + wt * wt);
        phi[i] = std::atan(wt);
    }
    return {ImageStack(phantom.dims, ValueKind::generic, std::move(m)),
            ImageStack(phantom.dims, ValueKind::generic, std::move(phi))};
}

DecayCube simulate_decay_cube(const Phantom& phantom, std::size_t n_bins, double period,
                              double photons_per_unit_intensity, std::uint64_t seed) {
    if (n_bins < 4) throw Error(ErrorCode::InvalidArgument, "n_bins must be >= 4");
    if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
    if (photons_per_unit_intensity < 0.0) throw Error(ErrorCode::InvalidArgument, "photon scale must be >= 0");
    const auto px = rasterize(phantom);
    const Dims d = phantom.dims;
    DecayCube cube;
    cube.dims = d;
    cube.n_bins = n_bins;
    cube.bin_width = period / static_cast<double>(n_bins);
    cube.data.assign(d.count() * n_bins, 0.0);

    parallel_for(d.nz, [&](std::size_t z) {
        std::vector<double> expected(n_bins);
        for (std::size_t i = z * d.slice_size(); i < (z + 1) * d.slice_size(); ++i) {
            const double tau = ns_to_s(px[i].tau_ns);
            const double amp = px[i].intensity;
            if (tau <= 0.0) {
                std::fill(expected.begin(), expected.end(), 0.0);
                expected[0] = amp;
            } else {
                // -expm1 keeps the fold factor accurate for tau >> period
                const double fold = -std::expm1(-period / tau);
                double prev = 1.0;
                for (std::size_t k = 0; k < n_bins; ++k) {
                    const double next = std::exp(-static_cast<double>(k + 1) * cube.bin_width / tau);
                    expected[k] = amp * (prev - next) / fold;
                    prev = next;
                }
            }
            double* out = cube.data.data() + i * n_bins;
            for (std::size_t k = 0; k < n_bins; ++k) {
                if (photons_per_unit_intensity > 0.0) {
                    CounterStream stream(seed, i, kChannelDecayBase + static_cast<std::uint32_t>(k));
                    out[k] = static_cast<double>(stream.poisson(photons_per_unit_intensity * expected[k]));
                } else {
                    out[k] = expected[k];
                }
            }
        }
    });
    return cube;
}

}  // namespace phasor_forge

namespace phasor_forge {

Phantom three_tau_phantom(Dims dims) {
    const auto frac = [](std::size_t n, std::size_t num) { return n * num / 32; };
    Phantom p;
    p.dims = dims;
    p.background = {0.0, 0.0};
    const std::size_t levels[3][2] = {{1, 31}, {6, 26}, {11, 21}};
    const double taus[3] = {0.5, 1.5, 2.5};
    for (int r = 0; r < 3; ++r) {
        p.regions.push_back({Box{0, dims.nz, frac(dims.ny, levels[r][0]), frac(dims.ny, levels[r][1]),
                                 frac(dims.nx, levels[r][0]), frac(dims.nx, levels[r][1])},
                             taus[r], 1.0});
    }
    return p;
}

Phantom two_cluster_phantom(Dims dims) {
    Phantom p;
    p.dims = dims;
    p.background = {0.0, 0.0};
    constexpr std::size_t kGrid = 4;
    const double cell_y = static_cast<double>(dims.ny) / kGrid;
    const double cell_x = static_cast<double>(dims.nx) / kGrid;
    const double radius = 0.38 * std::min(cell_y, cell_x);
    for (std::size_t i = 0; i < kGrid; ++i) {
        for (std::size_t j = 0; j < kGrid; ++j) {
            const double tau = (i + j) % 2 == 0 ? 1.0 : 2.0;
            const double intensity = 0.6 + 0.2 * static_cast<double>((i * kGrid + j) % 3);
            p.regions.push_back({Disc{0, dims.nz, (static_cast<double>(i) + 0.5) * cell_y - 0.5,
                                      (static_cast<double>(j) + 0.5) * cell_x - 0.5, radius},
                                 tau, intensity});
        }
    }
    return p;
}

Phantom random_phantom(Dims dims, std::uint64_t seed) {
    CounterStream stream(seed, 0, 0x9a17u);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * stream.uniform(); };
    auto index = [&](std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(stream.uniform() * static_cast<double>(n))); };
    Phantom p;
    p.dims = dims;
    p.background = {uniform(0.3, 3.0), stream.uniform() < 0.5 ? 0.0 : uniform(0.2, 0.5)};
    const std::size_t n_regions = 3 + index(5);
    for (std::size_t r = 0; r < n_regions; ++r) {
        const double tau = uniform(0.3, 3.0);
        const double intensity = uniform(0.4, 1.0);
        if (stream.uniform() < 0.5) {
            const std::size_t h = 4 + index(dims.ny / 2);
            const std::size_t w = 4 + index(dims.nx / 2);
            const std::size_t y0 = index(dims.ny - std::min(h, dims.ny - 1));
            const std::size_t x0 = index(dims.nx - std::min(w, dims.nx - 1));
            p.regions.push_back({Box{0, dims.nz, y0, std::min(dims.ny, y0 + h), x0, std::min(dims.nx, x0 + w)},
                                 tau, intensity});
        } else {
            const double max_r = 0.25 * static_cast<double>(std::min(dims.ny, dims.nx));
            const double radius = uniform(3.0, std::max(3.0, max_r));
            const double cy = uniform(radius, static_cast<double>(dims.ny) - 1.0 - radius);
            const double cx = uniform(radius, static_cast<double>(dims.nx) - 1.0 - radius);
            p.regions.push_back({Disc{0, dims.nz, cy, cx, radius}, tau, intensity});
        }
    }
    return p;
}

}  // namespace phasor_forge
