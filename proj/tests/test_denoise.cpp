#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/parallel.hpp"
#include "phasor_forge/phasor.hpp"
#include "phasor_forge/rng.hpp"
#include "phasor_forge/simulate.hpp"

using namespace phasor_forge;

namespace {

ImageStack random_stack(Dims d, std::uint64_t seed) {
    CounterStream rng(seed, 0, 0);
    std::vector<double> v(d.count());
    for (auto& x : v) x = rng.uniform();
    return ImageStack(d, ValueKind::generic, std::move(v));
}

// Direct definition: sort the replicate-padded neighbourhood.
ImageStack reference_median(const ImageStack& st, int window) {
    const Dims d = st.dims();
    const auto r = static_cast<std::ptrdiff_t>(window / 2);
    ImageStack out = st;
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                std::vector<double> w;
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        const auto yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0,
                                                                   static_cast<std::ptrdiff_t>(d.ny) - 1);
                        const auto xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0,
                                                                   static_cast<std::ptrdiff_t>(d.nx) - 1);
                        w.push_back(st.at(z, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
                    }
                }
                std::sort(w.begin(), w.end());
                out[d.index(z, y, x)] = w[w.size() / 2];
            }
        }
    }
    return out;
}

DenoiserModel zero_model(const DenoiserArchitecture& arch) {
    auto m = make_denoiser_model(arch, 1);
    for (auto& l : m.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0f);
        std::fill(l.bias.begin(), l.bias.end(), 0.0f);
    }
    return m;
}

}  // namespace

TEST_CASE("median examples") {
    const ImageStack flat({2, 5, 5}, ValueKind::generic, 0.3);
    CHECK(median_filter(flat, 3) == flat);

    ImageStack impulse({1, 5, 5}, ValueKind::generic, 0.0);
    impulse[12] = 1.0;
    const auto cleared = median_filter(impulse, 1);
    for (double v : cleared.values()) CHECK(v == 0.0);

    std::vector<double> v(9);
    for (int i = 0; i < 9; ++i) v[static_cast<std::size_t>(i)] = 9.0 - i;
    CHECK(median_filter(ImageStack({1, 3, 3}, ValueKind::generic, v), 1).at(0, 1, 1) == 5.0);

    CHECK_THROWS_AS(median_filter(flat, 0), Error);
    CHECK_THROWS_AS(median_filter(flat, 1, 4), Error);
}

TEST_CASE("median matches the sorted-window definition") {
    for (int window : {3, 5}) {
        const auto st = random_stack({3, 17, 23}, 5);
        CHECK(median_filter(st, 1, window) == reference_median(st, window));
        CHECK(median_filter(st, 2, window) == reference_median(reference_median(st, window), window));
    }
}

TEST_CASE("median range non-expansion and monotone commutation") {
    const auto st = random_stack({2, 20, 20}, 9);
    const auto out = median_filter(st, 1);
    const Dims d = st.dims();
    for (std::size_t z = 0; z < d.nz; ++z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                double lo = 1e9, hi = -1e9;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const auto yy = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(y) + dy, 0, 19));
                        const auto xx = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(x) + dx, 0, 19));
                        lo = std::min(lo, st.at(z, yy, xx));
                        hi = std::max(hi, st.at(z, yy, xx));
                    }
                }
                CHECK(out.at(z, y, x) >= lo);
                CHECK(out.at(z, y, x) <= hi);
            }
        }
    }
    const auto [mn, mx] = std::minmax_element(st.values().begin(), st.values().end());
    const auto thrice = median_filter(st, 3);
    for (double v : thrice.values()) {
        CHECK(v >= *mn);
        CHECK(v <= *mx);
    }

    ImageStack mapped = st;
    for (auto& v : mapped.values()) v = 2.0 * v + 1.0;
    auto filtered = median_filter(st, 2);
    for (auto& v : filtered.values()) v = 2.0 * v + 1.0;
    CHECK(median_filter(mapped, 2) == filtered);
}

TEST_CASE("median is thread-count independent") {
    const auto st = random_stack({6, 31, 29}, 13);
    set_thread_count(1);
    const auto a = median_filter(st, 2);
    set_thread_count(4);
    const auto b = median_filter(st, 2);
    set_thread_count(0);
    CHECK(a == b);
}

TEST_CASE("zero residual model is the identity") {
    const auto st = random_stack({2, 12, 9}, 3);
    const auto out = cnn_denoise(st, zero_model({3, 4}));
    for (std::size_t i = 0; i < st.size(); ++i) CHECK(std::abs(out[i] - st[i]) < 1e-6);
}

TEST_CASE("identity kernel without residual reproduces the input") {
    DenoiserModel m;
    m.residual = false;
    ConvLayer l{1, 1, std::vector<float>(9, 0.0f), {0.0f}};
    l.weights[4] = 1.0f;
    m.layers.push_back(l);
    const auto st = random_stack({2, 8, 11}, 4);
    const auto out = cnn_denoise(st, m);
    for (std::size_t i = 0; i < st.size(); ++i) CHECK(std::abs(out[i] - st[i]) < 1e-6);
}

TEST_CASE("convolution keeps spatial dims for any layer config") {
    for (auto [depth, channels] : {std::pair{1, 1}, std::pair{2, 3}, std::pair{4, 8}}) {
        const auto m = make_denoiser_model({depth, channels}, 17);
        for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 7}, {9, 4}}) {
            const auto st = random_stack({1, h, w}, 1);
            const auto out = cnn_denoise(st, m);
            CHECK(out.dims() == st.dims());
            for (double v : out.values()) CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("malformed models are rejected") {
    auto m = make_denoiser_model({3, 4}, 2);
    m.layers[1].in_channels = 5;
    CHECK_THROWS_AS(m.validate(), Error);
    try {
        cnn_denoise(random_stack({1, 4, 4}, 1), m);
        FAIL("expected ModelShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ModelShapeMismatch);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    const auto model = make_denoiser_model({2, 4}, 99);
    ConvNet<double> net(model);
    // perturb biases away from zero so every parameter is exercised
    CounterStream rng(8, 0, 0);
    for (auto& p : net.parameters()) p += 0.05 * (rng.uniform() - 0.5);

    std::vector<double> noisy(64), clean(64);
    for (std::size_t i = 0; i < 64; ++i) {
        clean[i] = 0.5 + 0.3 * std::sin(0.7 * static_cast<double>(i));
        noisy[i] = clean[i] + 0.2 * (rng.uniform() - 0.5);
    }
    std::vector<double> grad(net.parameter_count(), 0.0);
    const double loss = net.loss_and_gradient(noisy, clean, 8, 8, grad);
    CHECK(loss > 0.0);

    const double h = 1e-4;
    std::vector<double> scratch(net.parameter_count());
    double worst = 0.0;
    for (std::size_t k = 0; k < net.parameter_count(); ++k) {
        const double saved = net.parameters()[k];
        net.parameters()[k] = saved + h;
        const double up = net.loss_and_gradient(noisy, clean, 8, 8, scratch);
        net.parameters()[k] = saved - h;
        const double down = net.loss_and_gradient(noisy, clean, 8, 8, scratch);
        net.parameters()[k] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
        worst = std::max(worst, rel);
    }
    CAPTURE(worst);
    CHECK(worst < 1e-4);
}

TEST_CASE("to_model round trips parameters") {
    const auto model = make_denoiser_model({3, 5}, 4);
    const ConvNet<float> net(model);
    CHECK(net.to_model() == model);
    CHECK(net.parameter_count() == model.parameter_count());
}

TEST_CASE("zero learning rate returns the initialization") {
    const auto p = three_tau_phantom({1, 24, 24});
    const auto clean = render_phantom(p).intensity;
    const auto noisy = add_noise(clean, {50.0, 0.02, 3});
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.patch_size = 16;
    cfg.learning_rate = 0.0;
    cfg.architecture = {3, 4};
    const auto result = train_denoiser({{noisy, clean}}, cfg);
    CHECK(result.model == make_denoiser_model(cfg.architecture, cfg.seed));
    CHECK(result.best_epoch == 0);
}

TEST_CASE("small learning rate gives a non-increasing full-set loss") {
    const auto p = three_tau_phantom({1, 32, 32});
    const auto clean = render_phantom(p).intensity;
    const auto noisy = add_noise(clean, {30.0, 0.05, 21});
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.patch_size = 32;
    cfg.batch_size = 1;
    cfg.learning_rate = 1e-4;
    cfg.momentum = 0.0;
    cfg.architecture = {3, 4};
    const auto result = train_denoiser({{noisy, clean}}, cfg);
    REQUIRE(result.train_loss.size() == 9);
    for (std::size_t e = 1; e < result.train_loss.size(); ++e) {
        CAPTURE(e);
        CHECK(result.train_loss[e] <= result.train_loss[e - 1]);
    }
    CHECK(result.train_loss.back() < result.train_loss.front());
}

TEST_CASE("training is deterministic and thread-count independent") {
    std::vector<ImagePair> pairs;
    for (std::uint64_t i = 0; i < 4; ++i) {
        const auto clean = render_phantom(random_phantom({1, 24, 24}, i)).intensity;
        pairs.emplace_back(add_noise(clean, {40.0, 0.03, i}), clean);
    }
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.patch_size = 12;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.01;
    cfg.architecture = {3, 6};
    set_thread_count(1);
    const auto a = train_denoiser(pairs, cfg);
    const auto b = train_denoiser(pairs, cfg);
    set_thread_count(3);
    const auto c = train_denoiser(pairs, cfg);
    set_thread_count(0);
    CHECK(a.model == b.model);
    CHECK(a.validation_loss == b.validation_loss);
    CHECK(a.model == c.model);
    REQUIRE(a.validation_loss.size() == c.validation_loss.size());
    for (std::size_t i = 0; i < a.validation_loss.size(); ++i) {
        CHECK(std::abs(a.validation_loss[i] - c.validation_loss[i]) < 1e-6);
    }
}

TEST_CASE("training rejects bad inputs and divergence") {
    const ImageStack clean({1, 8, 8}, ValueKind::generic, 0.5);
    TrainConfig cfg;
    cfg.patch_size = 16;
    CHECK_THROWS_AS(train_denoiser({{clean, clean}}, cfg), Error);
    CHECK_THROWS_AS(train_denoiser({}, cfg), Error);
    cfg.patch_size = 8;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_denoiser({{clean, clean}}, cfg), Error);

    auto noisy = random_stack({1, 16, 16}, 2);
    auto target = random_stack({1, 16, 16}, 3);
    for (auto& v : target.values()) v *= 1e6;
    cfg.epochs = 5;
    cfg.learning_rate = 1e6;
    cfg.architecture = {2, 2};
    try {
        train_denoiser({{noisy, target}}, cfg);
        FAIL("expected DivergedLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivergedLoss);
    }
}

TEST_CASE("FWT1 round trip and error conditions") {
    const auto model = make_denoiser_model({3, 4}, 123);
    const auto bytes = encode_model(model);
    CHECK(bytes.size() == 4 + 4 + 3 * 16 + 4 * model.parameter_count());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FWT1");
    CHECK(bytes[4] == 3);
    CHECK(bytes[5] == 0);
    const auto back = decode_model(bytes);
    CHECK(back == model);
    CHECK(encode_model(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "pf_test_model.fwt";
    save_model(model, path);
    CHECK(load_model(path) == model);
    std::filesystem::remove(path);

    auto expect = [](std::vector<std::uint8_t> b, ErrorCode code) {
        try {
            decode_model(b);
            FAIL("decode should fail");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    expect(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3), ErrorCode::TruncatedFile);
    expect(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 2), ErrorCode::TruncatedFile);
    auto wrong = bytes;
    wrong[0] = 'X';
    expect(wrong, ErrorCode::BadMagic);
    // 1 -> 4 channels followed by a layer expecting 3
    std::vector<std::uint8_t> chain = {'F', 'W', 'T', '1'};
    auto put = [&chain](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) chain.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put(2);
    for (auto [o, i] : {std::pair<std::uint32_t, std::uint32_t>{4, 1}, {1, 3}}) {
        put(o);
        put(i);
        put(3);
        put(3);
        for (std::uint32_t k = 0; k < o * i * 9 + o; ++k) put(0);
    }
    expect(chain, ErrorCode::ShapeChainBroken);
    auto trailing = bytes;
    trailing.push_back(0);
    expect(trailing, ErrorCode::LengthMismatch);
    CHECK_THROWS_AS(load_model("/nonexistent/dir/model.fwt"), Error);
}

TEST_CASE("denoise_phasor median on a piecewise-constant field") {
    const auto p = three_tau_phantom({1, 64, 64});
    const NoiseSpec none{0.0, 0.0, 0};
    const auto field = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, none));
    const auto out = denoise_phasor(field, MedianMethod{1, 3});
    CHECK(out.mask == field.mask);
    CHECK(out.omega == field.omega);
    // Pixels whose 3x3 neighbourhood is uniform are unchanged.
    const Dims d = field.dims();
    std::size_t interior = 0;
    for (std::size_t y = 1; y + 1 < d.ny; ++y) {
        for (std::size_t x = 1; x + 1 < d.nx; ++x) {
            bool uniform = true;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    uniform = uniform && field.g.at(0, y + dy, x + dx) == field.g.at(0, y, x);
                }
            }
            if (!uniform) continue;
            ++interior;
            CHECK(out.g.at(0, y, x) == field.g.at(0, y, x));
            CHECK(out.s.at(0, y, x) == field.s.at(0, y, x));
        }
    }
    CHECK(interior > 2000);
}

TEST_CASE("median x2 shrinks per-cluster phasor spread on the noisy phantom") {
    const auto p = three_tau_phantom({2, 96, 96});
    const auto raw = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, {100.0, 0.05, 5}));
    const auto den = denoise_phasor(raw, MedianMethod{2, 3});
    const auto truth = truth_labels(p);
    for (std::uint8_t label = 1; label <= 3; ++label) {
        auto spread = [&](const PhasorField& f) {
            double sg = 0, ss = 0, sg2 = 0, ss2 = 0, n = 0;
            for (std::size_t i = 0; i < f.mask.size(); ++i) {
                if (truth.labels[i] != label || !f.mask[i]) continue;
                sg += f.g[i];
                ss += f.s[i];
                sg2 += f.g[i] * f.g[i];
                ss2 += f.s[i] * f.s[i];
                n += 1;
            }
            return std::sqrt((sg2 - sg * sg / n + ss2 - ss * ss / n) / n);
        };
        CAPTURE(label);
        CHECK(spread(den) < spread(raw));
    }
}

TEST_CASE("cnn path keeps the median path contract") {
    const auto p = three_tau_phantom({1, 32, 32});
    const auto raw = phasor_from_mixers(simulate_mixers(p, kDefaultOmega, 0.5, 0.5, {100.0, 0.05, 5}));
    const auto med = denoise_phasor(raw, MedianMethod{});
    const auto cnn = denoise_phasor(raw, CnnMethod{make_denoiser_model({3, 4}, 8)});
    CHECK(cnn.dims() == med.dims());
    CHECK(cnn.mask == med.mask);
    CHECK(cnn.omega == med.omega);
    CHECK_FALSE(cnn.g == med.g);
    for (std::size_t i = 0; i < cnn.mask.size(); ++i) {
        if (!cnn.mask[i]) {
            CHECK(cnn.g[i] == 0.0);
            CHECK(cnn.s[i] == 0.0);
        }
    }
}

TEST_CASE("masked median") {
    const auto st = random_stack({2, 15, 13}, 31);
    const Mask all(st.size(), 1);
    CHECK(masked_median_filter(st, all, 2) == median_filter(st, 2));

    // Values under masked-out pixels never reach valid ones.
    Mask half(st.size(), 1);
    for (std::size_t i = 0; i < half.size(); i += 3) half[i] = 0;
    ImageStack poisoned = st;
    for (std::size_t i = 0; i < half.size(); ++i) {
        if (!half[i]) poisoned[i] = 1e6;
    }
    const auto a = masked_median_filter(st, half, 2);
    const auto b = masked_median_filter(poisoned, half, 2);
    for (std::size_t i = 0; i < half.size(); ++i) {
        if (half[i]) {
            CHECK(a[i] == b[i]);
        } else {
            CHECK(b[i] == 1e6);
        }
    }

    // even count: mean of the two central values
    const ImageStack row({1, 1, 3}, ValueKind::generic, std::vector<double>{1.0, 4.0, 100.0});
    const auto out = masked_median_filter(row, Mask{1, 1, 0}, 1);
    // window at x=0 holds {1, 1, 4} after replicate padding; at x=1 it holds {1, 4}
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.5);
    CHECK(out[2] == 100.0);
    CHECK_THROWS_AS(masked_median_filter(row, Mask{1, 1}, 1), Error);
}
