#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

#include "phasor_forge/phasor.hpp"
#include "phasor_forge/simulate.hpp"

using namespace phasor_forge;

namespace {

const NoiseSpec kNoNoise{0.0, 0.0, 0};

Phantom uniform_phantom(Dims d, double tau_ns, double intensity) {
    Phantom p;
    p.dims = d;
    p.background = {tau_ns, intensity};
    return p;
}

// Composite Simpson over one period of the folded decay e^{-t/tau}/(1 - e^{-T/tau}).
std::pair<double, double> quadrature_phasor(double tau, double omega, double period) {
    const int n = 200000;
    const double h = period / n;
    double i0 = 0, ic = 0, is = 0;
    for (int k = 0; k <= n; ++k) {
        const double t = k * h;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        const double f = std::exp(-t / tau) / (1.0 - std::exp(-period / tau));
        i0 += w * f;
        ic += w * f * std::cos(omega * t);
        is += w * f * std::sin(omega * t);
    }
    return {ic / i0, is / i0};
}

DecayCube single_pixel_cube(std::vector<double> bins, double period) {
    DecayCube c;
    c.dims = {1, 1, 1};
    c.n_bins = bins.size();
    c.bin_width = period / static_cast<double>(bins.size());
    c.data = std::move(bins);
    return c;
}

}  // namespace

TEST_CASE("phasor_from_mixers at omega tau = 1 and tau = 0") {
    const double omega = kDefaultOmega;
    auto m = simulate_mixers(uniform_phantom({1, 1, 1}, 1e9 / omega, 1.0), omega, 0.5, 0.1, kNoNoise);
    CHECK(m.v0[0] - m.v_pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.v_half_pi[0] - m.v_three_half_pi[0] == doctest::Approx(0.5).epsilon(1e-12));
    auto f = phasor_from_mixers(m);
    CHECK(f.g[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.s[0] == doctest::Approx(0.5).epsilon(1e-12));

    m = simulate_mixers(uniform_phantom({1, 1, 1}, 0.0, 1.0), omega, 0.5, 0.1, kNoNoise);
    f = phasor_from_mixers(m);
    CHECK(f.g[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(f.s[0]) < 1e-15);
}

TEST_CASE("mixer differences are offset invariant") {
    const auto p = three_tau_phantom({1, 32, 32});
    const auto a = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.0, kNoNoise));
    const auto b = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 3.25, kNoNoise));
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        CHECK(std::abs(a.g[i] - b.g[i]) < 1e-12);
        CHECK(std::abs(a.s[i] - b.s[i]) < 1e-12);
    }
}

TEST_CASE("mixer path without intensity reports raw differences") {
    auto m = simulate_mixers(uniform_phantom({1, 2, 2}, 1.0, 1.0), kDefaultOmega, 0.5, 0.1, kNoNoise);
    const double s_raw = m.v0[0] - m.v_pi[0];
    m.intensity = ImageStack();
    const auto f = phasor_from_mixers(m);
    CHECK(f.s[0] == s_raw);
    CHECK(f.valid_count() == 4);
}

TEST_CASE("calibration maps the reference onto the semicircle") {
    // gain deliberately unknown to the calibrated path
    auto m = simulate_mixers(uniform_phantom({1, 4, 4}, 1.5, 1.0), kDefaultOmega, 0.37, 0.5, kNoNoise);
    const auto cal = measure_reference(m, 1.5e-9);
    const auto f = phasor_from_mixers(m, cal);
    const auto [g, s] = phasor_from_lifetime(1.5e-9, kDefaultOmega);
    CHECK(f.g[5] == doctest::Approx(g).epsilon(1e-12));
    CHECK(f.s[5] == doctest::Approx(s).epsilon(1e-12));

    try {
        phasor_from_mixers(m, CalibrationRef{1e-9, 0.0, 1e-13});
        FAIL("expected ZeroReference");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ZeroReference);
    }
}

TEST_CASE("dim pixels are masked out") {
    Phantom p = uniform_phantom({1, 4, 4}, 1.0, 0.0);
    p.regions.push_back({Box{0, 1, 0, 4, 0, 2}, 1.0, 1.0});
    p.regions.push_back({Box{0, 1, 0, 1, 3, 4}, 1.0, 0.005});
    const auto f = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, kNoNoise));
    CHECK(f.valid_count() == 8);
    CHECK(f.mask[3] == 0);
    CHECK(f.g[3] == 0.0);
}

TEST_CASE("phasor_from_decay impulse, uniform and folded exponential") {
    const double period = 12.5e-9;
    const double omega = 2.0 * std::numbers::pi / period;
    std::vector<double> impulse(256, 0.0);
    impulse[0] = 10.0;
    auto f = phasor_from_decay(single_pixel_cube(impulse, period), omega);
    const double half_bin = omega * period / 256.0 / 2.0;
    CHECK(f.g[0] == doctest::Approx(std::cos(half_bin)).epsilon(1e-12));
    CHECK(f.s[0] == doctest::Approx(std::sin(half_bin)).epsilon(1e-12));

    f = phasor_from_decay(single_pixel_cube(std::vector<double>(100, 3.0), period), omega);
    CHECK(std::abs(f.g[0]) < 1e-12);
    CHECK(std::abs(f.s[0]) < 1e-12);

    const auto cube = simulate_decay_cube(uniform_phantom({1, 1, 1}, 2.5, 1.0), 1024, period, 0.0, 0);
    f = phasor_from_decay(cube, omega);
    const auto [qg, qs] = quadrature_phasor(2.5e-9, omega, period);
    CHECK(std::abs(qg - 0.387727) < 1e-6);
    CHECK(std::abs(qs - 0.487232) < 1e-6);
    CHECK(std::abs(f.g[0] - qg) < 1e-4);
    CHECK(std::abs(f.s[0] - qs) < 1e-4);
    CHECK(std::abs(f.g[0] - 0.387727) < 1e-4);
    CHECK(std::abs(f.s[0] - 0.487227) < 1e-4);
}

TEST_CASE("decay phasor converges quadratically in the bin count") {
    const double period = 12.5e-9;
    const double omega = 2.0 * std::numbers::pi / period;
    for (double tau_ns : {0.5, 1.0, 2.5, 5.0 / omega * 1e9}) {
        const auto [cg, cs] = phasor_from_lifetime(tau_ns * 1e-9, omega);
        auto err = [&](std::size_t bins) {
            const auto cube = simulate_decay_cube(uniform_phantom({1, 1, 1}, tau_ns, 1.0), bins, period, 0.0, 0);
            const auto f = phasor_from_decay(cube, omega);
            return std::hypot(f.g[0] - cg, f.s[0] - cs);
        };
        const double e256 = err(256);
        const double e1024 = err(1024);
        CAPTURE(tau_ns);
        CHECK(e256 < 1e-3);
        CHECK(e1024 < 1e-4);
        CHECK(e1024 < e256 / 4.0 * 1.5);
    }
}

TEST_CASE("decay phasor is intensity-scale invariant and masks empty pixels") {
    const double period = 12.5e-9;
    const double omega = 2.0 * std::numbers::pi / period;
    auto p = three_tau_phantom({1, 16, 16});
    auto cube = simulate_decay_cube(p, 128, period, 0.0, 0);
    const auto a = phasor_from_decay(cube, omega);
    for (auto& v : cube.data) v *= 17.5;
    const auto b = phasor_from_decay(cube, omega);
    std::size_t empty = 0;
    for (std::size_t i = 0; i < a.mask.size(); ++i) {
        CHECK(a.mask[i] == b.mask[i]);
        if (!a.mask[i]) {
            ++empty;
            continue;
        }
        CHECK(std::abs(a.g[i] - b.g[i]) < 1e-12);
        CHECK(std::abs(a.s[i] - b.s[i]) < 1e-12);
    }
    CHECK(empty > 0);
}

TEST_CASE("phasor_from_decay harmonics") {
    const double period = 12.5e-9;
    const double omega = 2.0 * std::numbers::pi / period;
    const auto cube = simulate_decay_cube(uniform_phantom({1, 1, 1}, 1.0, 1.0), 2048, period, 0.0, 0);
    const auto f = phasor_from_decay(cube, omega, 2);
    CHECK(f.omega == doctest::Approx(2.0 * omega));
    const auto [g, s] = phasor_from_lifetime(1e-9, 2.0 * omega);
    CHECK(std::abs(f.g[0] - g) < 1e-4);
    CHECK(std::abs(f.s[0] - s) < 1e-4);
    CHECK_THROWS_AS(phasor_from_decay(cube, omega * 1.37), Error);
}

TEST_CASE("phasor_from_fd examples") {
    const Dims d{1, 1, 3};
    const ImageStack m(d, ValueKind::generic, std::vector<double>{1.0, 1.0 / std::sqrt(2.0), 0.0});
    const ImageStack phi(d, ValueKind::generic, std::vector<double>{0.0, std::numbers::pi / 4, 1.3});
    const auto f = phasor_from_fd(m, phi, kDefaultOmega);
    CHECK(f.g[0] == 1.0);
    CHECK(f.s[0] == 0.0);
    CHECK(f.g[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.s[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(f.g[2] == 0.0);
    CHECK(f.s[2] == 0.0);
}

TEST_CASE("mixer and FD paths agree on noise-free phantoms") {
    const auto p = three_tau_phantom({2, 48, 48});
    const auto mixer = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, kNoNoise));
    const auto fd_meas = simulate_fd(p, kDefaultOmega);
    const auto fd = phasor_from_fd(fd_meas.mod_degree, fd_meas.phase, kDefaultOmega);
    for (std::size_t i = 0; i < mixer.mask.size(); ++i) {
        if (!mixer.mask[i]) continue;
        CHECK(std::abs(mixer.g[i] - fd.g[i]) < 1e-9);
        CHECK(std::abs(mixer.s[i] - fd.s[i]) < 1e-9);
    }
}

TEST_CASE("lifetime_map examples") {
    const Dims d{1, 1, 3};
    PhasorField f;
    f.g = ImageStack(d, ValueKind::g, std::vector<double>{0.5, 1.0, 0.0});
    f.s = ImageStack(d, ValueKind::s, std::vector<double>{0.5, 0.0, 0.3});
    f.mask = {1, 1, 1};
    const auto tau = lifetime_map(f);
    CHECK(tau.tau[0] == doctest::Approx(1.98944).epsilon(1e-5));
    CHECK(tau.tau[1] == 0.0);
    CHECK(tau.mask[2] == 0);
    CHECK(std::isfinite(tau.tau[2]));
}

TEST_CASE("histogram single pixel, conservation and three-tau phantom") {
    PhasorField f;
    const Dims d{1, 1, 3};
    f.g = ImageStack(d, ValueKind::g, std::vector<double>{0.5, 1.5, 0.2});
    f.s = ImageStack(d, ValueKind::s, std::vector<double>{0.5, 0.1, 0.1});
    f.mask = {1, 1, 0};
    const auto h = phasor_histogram(f, 100, 60, {0, 1, 0, 0.6});
    std::size_t nonzero = 0;
    for (double c : h.counts) nonzero += c > 0;
    CHECK(nonzero == 1);
    CHECK(h.at(50, 50) == 1.0);
    CHECK(h.total() + h.overflow == 2.0);

    const auto p = three_tau_phantom({2, 64, 64});
    const auto field = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, kNoNoise));
    const auto hist = phasor_histogram(field);
    std::set<std::size_t> bins;
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        if (hist.counts[i] > 0) bins.insert(i);
    }
    CHECK(bins.size() == 3);
    CHECK(hist.total() + hist.overflow == static_cast<double>(field.valid_count()));
    for (double tau : {0.5e-9, 1.5e-9, 2.5e-9}) {
        const auto [g, s] = phasor_from_lifetime(tau, kDefaultOmega);
        const auto ig = static_cast<std::size_t>(g * 256.0);
        const auto is = static_cast<std::size_t>(s / 0.6 * 154.0);
        CHECK(bins.count(is * 256 + ig) == 1);
    }
}

TEST_CASE("weighted histogram sums intensity") {
    const auto p = three_tau_phantom({1, 32, 32});
    const auto m = simulate_mixers(p, kDefaultOmega, 0.5, 0.5, kNoNoise);
    const auto field = phasor_from_mixers(m);
    ImageStack w = m.intensity;
    for (auto& v : w.values()) v *= 2.0;
    const auto h = phasor_histogram(field, 256, 154, {}, w);
    CHECK(h.total() + h.overflow == doctest::Approx(2.0 * static_cast<double>(field.valid_count())));
    CHECK_THROWS_AS(phasor_histogram(field, 0, 10), Error);
    CHECK_THROWS_AS(phasor_histogram(field, 10, 10, {1, 1, 0, 1}), Error);
}
