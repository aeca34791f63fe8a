#include "phasor_forge/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "phasor_forge/io.hpp"
#include "phasor_forge/render.hpp"

namespace phasor_forge {

using nlohmann::json;

namespace {

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Acquired {
    PhasorField field;
    ImageStack intensity;
};

Acquired acquire(const PipelineConfig& cfg) {
    const auto& acq = cfg.acquisition;
    const double omega = acq.omega();
    if (acq.source == "decay") {
        const auto cube = simulate_decay_cube(cfg.phantom, acq.n_bins, 1.0 / acq.f_mod_hz,
                                              acq.photons_per_unit_intensity, cfg.noise.seed);
        Acquired out{phasor_from_decay(cube, omega), ImageStack(cube.dims, ValueKind::intensity)};
        double peak = 0.0;
        for (std::size_t i = 0; i < cube.dims.count(); ++i) {
            double total = 0.0;
            for (double c : cube.pixel(i)) total += c;
            out.intensity[i] = std::max(0.0, total);
            peak = std::max(peak, total);
        }
        for (std::size_t i = 0; i < out.field.mask.size(); ++i) {
            if (out.intensity[i] < acq.intensity_threshold * peak) {
                out.field.mask[i] = 0;
                out.field.g[i] = 0.0;
                out.field.s[i] = 0.0;
            }
        }
        return out;
    }
    const auto mixers = simulate_mixers(cfg.phantom, omega, acq.gain, acq.offset, cfg.noise);
    const MixerPhasorOptions opts{acq.intensity_threshold};
    std::optional<CalibrationRef> cal;
    if (acq.calibration_tau_ns) {
        // reference sample: uniform fluorophore imaged with the same settings
        Phantom ref;
        ref.dims = {1, 32, 32};
        ref.background = {*acq.calibration_tau_ns, 1.0};
        NoiseSpec ref_noise = cfg.noise;
        ref_noise.seed = cfg.noise.seed ^ 0x5ca1ab1eULL;
        cal = measure_reference(simulate_mixers(ref, omega, acq.gain, acq.offset, ref_noise),
                                ns_to_s(*acq.calibration_tau_ns), opts);
    }
    return {phasor_from_mixers(mixers, cal, opts), mixers.intensity};
}

void add_file(StageOutputs& out, const std::string& name, std::vector<std::uint8_t> bytes) {
    out.files.emplace_back(name, std::move(bytes));
}

}  // namespace

std::vector<ImagePair> synthetic_training_pairs(const TrainingDataConfig& data, const NoiseSpec& noise,
                                                const AcquisitionConfig& acq) {
    std::vector<ImagePair> pairs;
    const Dims dims{1, data.image_size, data.image_size};
    const NoiseSpec clean{0.0, 0.0, 0};
    for (int i = 0; i < data.pairs; ++i) {
        const auto phantom = random_phantom(dims, data.seed + static_cast<std::uint64_t>(i) / 2);
        NoiseSpec n = noise;
        n.seed = data.seed * 7919 + static_cast<std::uint64_t>(i) / 2;
        const MixerPhasorOptions opts{acq.intensity_threshold};
        const auto noisy = phasor_from_mixers(simulate_mixers(phantom, acq.omega(), acq.gain, acq.offset, n), {}, opts);
        const auto truth = phasor_from_mixers(simulate_mixers(phantom, acq.omega(), acq.gain, acq.offset, clean), {}, opts);
        if (i % 2 == 0) {
            pairs.emplace_back(noisy.g, truth.g);
        } else {
            pairs.emplace_back(noisy.s, truth.s);
        }
    }
    return pairs;
}

json cluster_report(const ClusterResult& cluster, const SegmentationMap& map) {
    json clusters = json::array();
    for (std::size_t i = 0; i < cluster.centroids.size(); ++i) {
        clusters.push_back({{"label", i + 1},
                            {"centroid", {cluster.centroids[i].g, cluster.centroids[i].s}},
                            {"lifetime_ns", finite_or_null(map.cluster_lifetimes_ns[i])},
                            {"radius", finite_or_null(cluster.radii[i])},
                            {"pixels", cluster.pixel_counts[i]}});
    }
    return {{"clusters", clusters}, {"objective", cluster.objective}, {"iterations", cluster.iterations}};
}

StageOutputs execute_pipeline(const PipelineConfig& cfg) {
    StageOutputs out;
    json timings = json::object();
    Stopwatch total;
    Stopwatch watch;

    auto [raw, intensity] = acquire(cfg);
    timings["simulate_phasor"] = watch.lap();

    json train_report = nullptr;
    DenoiseMethod method = MedianMethod{cfg.denoise.passes, cfg.denoise.window};
    if (cfg.denoise.method == "cnn") {
        DenoiserModel model;
        if (cfg.denoise.train) {
            const auto pairs = synthetic_training_pairs(cfg.denoise.train_data, cfg.noise, cfg.acquisition);
            const auto trained = train_denoiser(pairs, *cfg.denoise.train);
            model = trained.model;
            train_report = {{"pairs", pairs.size()},
                            {"epochs", cfg.denoise.train->epochs},
                            {"best_epoch", trained.best_epoch},
                            {"validation_loss", trained.validation_loss}};
            add_file(out, "model.fwt", encode_model(model));
        } else {
            model = load_model(*cfg.denoise.model_path);
        }
        method = CnnMethod{std::move(model)};
        timings["train"] = watch.lap();
    }

    PhasorField denoised = cfg.denoise.method == "none" ? raw : denoise_phasor(raw, method);
    timings["denoise"] = watch.lap();

    const RadiusSpec& radius = cfg.segment.radius;
    const SegmentOptions seg_opts{cfg.segment.max_iter, cfg.segment.tol};
    auto [raw_cluster, raw_map] = segment_phasor(raw, cfg.segment.k, radius, cfg.segment.seed, std::nullopt, seg_opts);
    auto [den_cluster, den_map] =
        segment_phasor(denoised, cfg.segment.k, radius, cfg.segment.seed, std::nullopt, seg_opts);
    const auto truth = truth_labels(cfg.phantom);
    std::size_t truth_k = 0;
    for (auto l : truth.labels) truth_k = std::max<std::size_t>(truth_k, l);
    json misassignment = nullptr;
    if (truth_k > 0 && std::max<std::size_t>(truth_k, static_cast<std::size_t>(cfg.segment.k)) <= 6) {
        misassignment = {{"raw", misassignment_rate(raw_map, truth)}, {"denoised", misassignment_rate(den_map, truth)}};
    }
    timings["segment"] = watch.lap();

    const auto tau_raw = lifetime_map(raw);
    const auto tau_den = lifetime_map(denoised);
    const auto& r = cfg.render;
    const auto hist_raw = phasor_histogram(raw, r.hist_bins_g, r.hist_bins_s);
    const auto hist_den = phasor_histogram(denoised, r.hist_bins_g, r.hist_bins_s);
    add_file(out, "composite.ppm", encode_ppm(composite_hsv(intensity, tau_den, r.slice, r.tau_lo_ns, r.tau_hi_ns)));
    add_file(out, "composite_raw.ppm", encode_ppm(composite_hsv(intensity, tau_raw, r.slice, r.tau_lo_ns, r.tau_hi_ns)));
    add_file(out, "phasor_raw.ppm", encode_ppm(render_phasor_plot(hist_raw, raw_cluster.centroids, r.gamma)));
    add_file(out, "phasor_denoised.ppm", encode_ppm(render_phasor_plot(hist_den, den_cluster.centroids, r.gamma)));
    add_file(out, "segmentation_raw.ppm", encode_ppm(render_segmentation(raw_map, r.slice, intensity)));
    add_file(out, "segmentation.ppm", encode_ppm(render_segmentation(den_map, r.slice, intensity)));
    timings["render"] = watch.lap();

    add_file(out, "intensity.fts", encode_fts(to_tensor(intensity)));
    add_file(out, "mask.fts", encode_fts(to_tensor(raw.mask, raw.dims())));
    add_file(out, "g_raw.fts", encode_fts(to_tensor(raw.g)));
    add_file(out, "s_raw.fts", encode_fts(to_tensor(raw.s)));
    add_file(out, "g_denoised.fts", encode_fts(to_tensor(denoised.g)));
    add_file(out, "s_denoised.fts", encode_fts(to_tensor(denoised.s)));
    add_file(out, "lifetime_ns.fts", encode_fts(to_tensor(tau_den.tau)));
    add_file(out, "labels_raw.fts", encode_fts(to_tensor(raw_map.labels)));
    add_file(out, "labels.fts", encode_fts(to_tensor(den_map.labels)));
    timings["encode"] = watch.lap();
    timings["total"] = total.lap();

    json outputs = json::array();
    for (const auto& [name, bytes] : out.files) outputs.push_back(name);
    outputs.push_back("report.json");
    const Dims d = raw.dims();
    out.report = {
        {"schema_version", 1},
        {"dims", {d.nz, d.ny, d.nx}},
        {"omega", raw.omega},
        {"source", cfg.acquisition.source},
        {"valid_pixels", raw.valid_count()},
        {"denoise", {{"method", cfg.denoise.method}, {"passes", cfg.denoise.passes}, {"window", cfg.denoise.window}}},
        {"k", cfg.segment.k},
        {"raw", cluster_report(raw_cluster, raw_map)},
        {"denoised", cluster_report(den_cluster, den_map)},
        {"cluster_lifetimes_ns", json::array()},
        {"objective", den_cluster.objective},
        {"iterations", den_cluster.iterations},
        {"misassignment", misassignment},
        {"train", train_report},
        {"timings_s", timings},
        {"outputs", outputs},
    };
    for (double t : den_map.cluster_lifetimes_ns) out.report["cluster_lifetimes_ns"].push_back(finite_or_null(t));
    return out;
}

json run_pipeline(const PipelineConfig& cfg) {
    auto result = execute_pipeline(cfg);
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + cfg.output_dir.string());
    for (const auto& [name, bytes] : result.files) write_file_atomic(cfg.output_dir / name, bytes);
    const std::string text = result.report.dump(2) + "\n";
    write_file_atomic(cfg.output_dir / "report.json", std::vector<std::uint8_t>(text.begin(), text.end()));
    return result.report;
}

}  // namespace phasor_forge
