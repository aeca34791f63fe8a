// phasor-forge command line: one subcommand per stage plus `pipeline`.
//
// Stages exchange a directory of FTS stacks and a meta.json that carries the
// acquisition constants (omega, gain, offset, period) between them.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "phasor_forge/io.hpp"
#include "phasor_forge/parallel.hpp"
#include "phasor_forge/pipeline.hpp"
#include "phasor_forge/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace phasor_forge;

namespace {

enum Exit : int {
    kOk = 0,
    kOther = 1,
    kUsage = 2,
    kIo = 3,
    kFormat = 4,
    kNumeric = 5,
};

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::Config:
        case ErrorCode::RegionOutOfBounds:
        case ErrorCode::ModelShapeMismatch:
        case ErrorCode::PaletteTooSmall:
        case ErrorCode::KTooLargeForExactMatching:
            return kUsage;
        case ErrorCode::Io:
            return kIo;
        case ErrorCode::BadMagic:
        case ErrorCode::TruncatedFile:
        case ErrorCode::ShapeChainBroken:
        case ErrorCode::DtypeUnsupported:
        case ErrorCode::LengthMismatch:
            return kFormat;
        case ErrorCode::DegeneratePhasor:
        case ErrorCode::ZeroReference:
        case ErrorCode::DivergedLoss:
        case ErrorCode::TooFewDistinctPoints:
            return kNumeric;
    }
    return kOther;
}

json read_json_file(const fs::path& path) {
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> json_bytes(const json& j) {
    const std::string text = j.dump(2) + "\n";
    return {text.begin(), text.end()};
}

// Collects outputs and writes them only once the whole command succeeded.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::vector<std::uint8_t> bytes) { files_.emplace_back(name, std::move(bytes)); }
    void stack(const std::string& name, const ImageStack& s) { add(name, encode_fts(to_tensor(s))); }

    void commit() const {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create " + dir_.string());
        for (const auto& [name, bytes] : files_) write_file_atomic(dir_ / name, bytes);
    }

private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files_;
};

Mask mask_from_stack(const ImageStack& s) {
    Mask m(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i] != 0.0 ? 1 : 0;
    return m;
}

PhasorField read_field(const fs::path& dir, double omega) {
    PhasorField f;
    f.g = read_fts(dir / "g.fts", ValueKind::g);
    f.s = read_fts(dir / "s.fts", ValueKind::s);
    f.mask = fs::exists(dir / "mask.fts") ? mask_from_stack(read_fts(dir / "mask.fts")) : Mask(f.g.size(), 1);
    f.omega = omega;
    f.validate();
    return f;
}

void write_field(OutputSet& out, const PhasorField& f) {
    out.stack("g.fts", f.g);
    out.stack("s.fts", f.s);
    out.add("mask.fts", encode_fts(to_tensor(f.mask, f.dims())));
}

json read_meta(const fs::path& dir) {
    const auto path = dir / "meta.json";
    if (!fs::exists(path)) throw Error(ErrorCode::Io, "missing " + path.string());
    return read_json_file(path);
}

double meta_omega(const json& meta) {
    if (!meta.contains("omega") || !meta["omega"].is_number()) throw Error(ErrorCode::Config, "meta.json lacks omega");
    return meta["omega"].get<double>();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    fs::path config;
    fs::path out = "sim";
    std::string preset = "three_tau";
    std::vector<std::size_t> dims;
    std::optional<std::uint64_t> seed;
    std::string source = "mixers";
};

int run_simulate(const SimulateArgs& a) {
    json doc = a.config.empty() ? json::object() : read_json_file(a.config);
    if (!doc.contains("phantom")) doc["phantom"] = {{"preset", a.preset}};
    if (!a.dims.empty()) {
        if (a.dims.size() != 3) throw Error(ErrorCode::Config, "--dims needs three values");
        doc["phantom"]["dims"] = a.dims;
    }
    if (a.seed) doc["noise"]["seed"] = *a.seed;
    if (!doc.contains("acquisition")) doc["acquisition"] = {{"source", a.source}};
    for (const auto& [key, v] : doc.items()) {
        if (key != "phantom" && key != "noise" && key != "acquisition") {
            throw Error(ErrorCode::Config, "/" + key + ": unknown key");
        }
    }
    const Phantom phantom = parse_phantom(doc["phantom"], "/phantom");
    const NoiseSpec noise = doc.contains("noise") ? parse_noise(doc["noise"], "/noise") : NoiseSpec{100.0, 0.05, 1};
    const AcquisitionConfig acq = parse_acquisition(doc["acquisition"], "/acquisition");

    OutputSet out(a.out);
    const auto maps = render_phantom(phantom);
    json meta = {{"omega", acq.omega()}, {"f_mod_hz", acq.f_mod_hz}, {"source", acq.source}};
    if (acq.source == "decay") {
        const double period = 1.0 / acq.f_mod_hz;
        const auto cube = simulate_decay_cube(phantom, acq.n_bins, period, acq.photons_per_unit_intensity, noise.seed);
        out.add("decay.fts", encode_fts(to_tensor(cube)));
        meta["period_s"] = period;
    } else {
        const auto m = simulate_mixers(phantom, acq.omega(), acq.gain, acq.offset, noise);
        out.stack("v0.fts", m.v0);
        out.stack("v_half_pi.fts", m.v_half_pi);
        out.stack("v_pi.fts", m.v_pi);
        out.stack("v_three_half_pi.fts", m.v_three_half_pi);
        out.stack("intensity.fts", m.intensity);
        meta["gain"] = acq.gain;
        meta["offset"] = acq.offset;
        meta["intensity_threshold"] = acq.intensity_threshold;
    }
    out.stack("truth_lifetime_ns.fts", maps.tau_map.tau);
    out.add("truth_labels.fts", encode_fts(to_tensor(truth_labels(phantom))));
    out.add("meta.json", json_bytes(meta));
    out.commit();
    return kOk;
}

// ------------------------------------------------------------------ phasor

struct PhasorArgs {
    fs::path input;
    fs::path out;
    std::optional<double> threshold;
    int harmonic = 1;
};

int run_phasor(const PhasorArgs& a) {
    json meta = read_meta(a.input);
    const double omega = meta_omega(meta);
    const std::string source = meta.value("source", "mixers");
    OutputSet out(a.out.empty() ? a.input : a.out);
    PhasorField field;
    if (source == "decay") {
        const auto cube = decay_cube_from_tensor(decode_fts(read_file(a.input / "decay.fts")), meta.at("period_s").get<double>());
        field = phasor_from_decay(cube, omega, a.harmonic);
        ImageStack intensity(cube.dims, ValueKind::intensity);
        for (std::size_t i = 0; i < cube.dims.count(); ++i) {
            double total = 0.0;
            for (double c : cube.pixel(i)) total += c;
            intensity[i] = std::max(0.0, total);
        }
        out.stack("intensity.fts", intensity);
    } else {
        MixerOutputs m;
        m.v0 = read_fts(a.input / "v0.fts");
        m.v_half_pi = read_fts(a.input / "v_half_pi.fts");
        m.v_pi = read_fts(a.input / "v_pi.fts");
        m.v_three_half_pi = read_fts(a.input / "v_three_half_pi.fts");
        if (fs::exists(a.input / "intensity.fts")) m.intensity = read_fts(a.input / "intensity.fts", ValueKind::intensity);
        m.omega = omega;
        m.gain = meta.value("gain", 1.0);
        m.offset = meta.value("offset", 0.0);
        const MixerPhasorOptions opts{a.threshold.value_or(meta.value("intensity_threshold", 0.01))};
        field = phasor_from_mixers(m, std::nullopt, opts);
        if (!a.out.empty() && m.intensity.size() > 0) out.stack("intensity.fts", m.intensity);
    }
    write_field(out, field);
    out.stack("lifetime_ns.fts", lifetime_map(field).tau);
    if (!a.out.empty()) {
        for (const char* name : {"truth_labels.fts", "truth_lifetime_ns.fts"}) {
            if (fs::exists(a.input / name)) out.add(name, read_file(a.input / name));
        }
    }
    meta["omega"] = field.omega;
    meta["valid_pixels"] = field.valid_count();
    out.add("meta.json", json_bytes(meta));
    out.commit();
    return kOk;
}

// ----------------------------------------------------------------- denoise

struct DenoiseArgs {
    fs::path input;
    fs::path out;
    std::string method = "median";
    int passes = 2;
    int window = 3;
    fs::path model;
};

int run_denoise(const DenoiseArgs& a) {
    json meta = read_meta(a.input);
    const auto field = read_field(a.input, meta_omega(meta));
    DenoiseMethod method = MedianMethod{a.passes, a.window};
    if (a.method == "cnn") {
        if (a.model.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required for cnn");
        method = CnnMethod{load_model(a.model)};
    }
    const auto den = denoise_phasor(field, method);
    OutputSet out(a.out);
    write_field(out, den);
    out.stack("lifetime_ns.fts", lifetime_map(den).tau);
    if (fs::exists(a.input / "intensity.fts")) out.add("intensity.fts", read_file(a.input / "intensity.fts"));
    if (fs::exists(a.input / "truth_labels.fts")) out.add("truth_labels.fts", read_file(a.input / "truth_labels.fts"));
    meta["denoise"] = {{"method", a.method}, {"passes", a.passes}, {"window", a.window}};
    out.add("meta.json", json_bytes(meta));
    out.commit();
    return kOk;
}

// ---------------------------------------------------------- train-denoiser

struct TrainArgs {
    fs::path config;
    fs::path out = "model.fwt";
};

int run_train(const TrainArgs& a) {
    json doc = a.config.empty() ? json::object() : read_json_file(a.config);
    TrainConfig cfg;
    TrainingDataConfig data;
    NoiseSpec noise{100.0, 0.05, 1};
    AcquisitionConfig acq;
    for (const auto& [key, v] : doc.items()) {
        if (key == "train") {
            json optim = json::object();
            for (const auto& [k, value] : v.items()) {
                if (k == "pairs") {
                    data.pairs = value.get<int>();
                } else if (k == "image_size") {
                    data.image_size = value.get<std::size_t>();
                } else if (k == "data_seed") {
                    data.seed = value.get<std::uint64_t>();
                } else {
                    optim[k] = value;
                }
            }
            cfg = parse_train(optim, "/train");
        } else if (key == "noise") {
            noise = parse_noise(v, "/noise");
        } else if (key == "acquisition") {
            acq = parse_acquisition(v, "/acquisition");
        } else {
            throw Error(ErrorCode::Config, "/" + key + ": unknown key");
        }
    }
    if (data.pairs < 1) throw Error(ErrorCode::Config, "/train/pairs: must be >= 1");
    const auto pairs = synthetic_training_pairs(data, noise, acq);
    const auto result = train_denoiser(pairs, cfg);
    const json report = {{"pairs", pairs.size()},
                         {"epochs", cfg.epochs},
                         {"best_epoch", result.best_epoch},
                         {"validation_loss", result.validation_loss},
                         {"train_loss", result.train_loss},
                         {"parameters", result.model.parameter_count()}};
    const fs::path dir = a.out.parent_path().empty() ? fs::path(".") : a.out.parent_path();
    OutputSet out(dir);
    out.add(a.out.filename().string(), encode_model(result.model));
    out.add(a.out.stem().string() + ".train.json", json_bytes(report));
    out.commit();
    std::cout << report.dump() << "\n";
    return kOk;
}

// ----------------------------------------------------------------- segment

struct SegmentArgs {
    fs::path input;
    fs::path out;
    int k = 3;
    std::string radius = "inf";
    std::uint64_t seed = 7;
    fs::path truth;
};

int run_segment(const SegmentArgs& a) {
    const json meta = read_meta(a.input);
    const auto field = read_field(a.input, meta_omega(meta));
    json radius_json;
    try {
        radius_json = json::parse(a.radius);
    } catch (const json::parse_error&) {
        radius_json = a.radius;
    }
    const auto radius = parse_radius(radius_json, "--radius");
    const auto [cluster, map] = segment_phasor(field, a.k, radius, a.seed);
    json report = cluster_report(cluster, map);
    report["k"] = a.k;
    fs::path truth_path = a.truth;
    if (truth_path.empty() && fs::exists(a.input / "truth_labels.fts")) truth_path = a.input / "truth_labels.fts";
    if (!truth_path.empty()) {
        const auto t = read_fts(truth_path);
        LabelField truth{t.dims(), std::vector<std::uint8_t>(t.size())};
        for (std::size_t i = 0; i < t.size(); ++i) truth.labels[i] = static_cast<std::uint8_t>(t[i]);
        report["misassignment"] = misassignment_rate(map, truth);
    }
    OutputSet out(a.out.empty() ? a.input : a.out);
    out.add("labels.fts", encode_fts(to_tensor(map.labels)));
    out.add("segment.json", json_bytes(report));
    out.commit();
    std::cout << report.dump() << "\n";
    return kOk;
}

// ------------------------------------------------------------------ render

struct RenderArgs {
    fs::path input;
    fs::path out;
    std::size_t slice = 0;
    double tau_lo = 0.0;
    double tau_hi = 3.0;
    double gamma = 0.5;
};

int run_render(const RenderArgs& a) {
    const json meta = read_meta(a.input);
    const double omega = meta_omega(meta);
    OutputSet out(a.out.empty() ? a.input : a.out);
    const auto field = read_field(a.input, omega);
    std::optional<ImageStack> intensity;
    if (fs::exists(a.input / "intensity.fts")) intensity = read_fts(a.input / "intensity.fts", ValueKind::intensity);

    std::optional<std::vector<PhasorPoint>> centroids;
    if (fs::exists(a.input / "segment.json")) {
        const json seg = read_json_file(a.input / "segment.json");
        std::vector<PhasorPoint> c;
        for (const auto& cl : seg.at("clusters")) c.push_back({cl.at("centroid")[0], cl.at("centroid")[1]});
        centroids = std::move(c);
    }
    out.add("phasor.ppm", encode_ppm(render_phasor_plot(phasor_histogram(field), centroids, a.gamma)));
    if (intensity) {
        out.add("composite.ppm", encode_ppm(composite_hsv(*intensity, lifetime_map(field), a.slice, a.tau_lo, a.tau_hi)));
    }
    if (fs::exists(a.input / "labels.fts")) {
        const auto t = read_fts(a.input / "labels.fts");
        SegmentationMap map;
        map.labels = {t.dims(), std::vector<std::uint8_t>(t.size())};
        std::size_t k = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            map.labels.labels[i] = static_cast<std::uint8_t>(t[i]);
            k = std::max<std::size_t>(k, map.labels.labels[i]);
        }
        map.palette = default_palette(std::max<std::size_t>(k, 1));
        out.add("segmentation.ppm", encode_ppm(render_segmentation(map, a.slice, intensity)));
    }
    out.commit();
    return kOk;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
    fs::path config;
    fs::path out;
};

int run_pipeline_command(const PipelineArgs& a) {
    auto cfg = load_pipeline_config(a.config);
    if (!a.out.empty()) cfg.output_dir = a.out;
    const auto report = run_pipeline(cfg);
    std::cout << json{{"output_dir", cfg.output_dir.string()},
                      {"cluster_lifetimes_ns", report["cluster_lifetimes_ns"]},
                      {"misassignment", report["misassignment"]}}
                     .dump()
              << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FLIM phasor analysis on synthetic phantoms"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: PHASOR_FORGE_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Render a phantom and simulate mixer outputs or a decay cube");
    c_sim->add_option("--config", sim.config, "JSON with phantom / noise / acquisition sections");
    c_sim->add_option("--preset", sim.preset, "Phantom preset")->check(CLI::IsMember({"three_tau", "two_cluster"}));
    c_sim->add_option("--dims", sim.dims, "nz ny nx")->expected(3);
    c_sim->add_option("--seed", sim.seed, "Noise seed");
    c_sim->add_option("--source", sim.source, "mixers or decay")->check(CLI::IsMember({"mixers", "decay"}));
    c_sim->add_option("-o,--out", sim.out, "Output directory");

    PhasorArgs ph;
    auto* c_ph = app.add_subcommand("phasor", "Compute g, s, mask and lifetime stacks");
    c_ph->add_option("-i,--input", ph.input, "Directory written by simulate")->required();
    c_ph->add_option("-o,--out", ph.out, "Output directory (default: input)");
    c_ph->add_option("--intensity-threshold", ph.threshold, "Mask pixels below this fraction of the peak");
    c_ph->add_option("--harmonic", ph.harmonic, "Harmonic for decay input")->check(CLI::PositiveNumber);

    DenoiseArgs dn;
    auto* c_dn = app.add_subcommand("denoise", "Denoise g and s");
    c_dn->add_option("-i,--input", dn.input, "Directory with g.fts, s.fts, mask.fts")->required();
    c_dn->add_option("-o,--out", dn.out, "Output directory")->required();
    c_dn->add_option("--method", dn.method, "median or cnn")->check(CLI::IsMember({"median", "cnn"}));
    c_dn->add_option("--passes", dn.passes, "Median passes")->check(CLI::PositiveNumber);
    c_dn->add_option("--window", dn.window, "Median window (odd)");
    c_dn->add_option("--model", dn.model, "FWT1 weight file for cnn");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train-denoiser", "Train the residual CNN on synthetic pairs");
    c_tr->add_option("--config", tr.config, "JSON with train / noise / acquisition sections");
    c_tr->add_option("-o,--out", tr.out, "Weight file to write");

    SegmentArgs sg;
    auto* c_sg = app.add_subcommand("segment", "K-means segmentation of a phasor field");
    c_sg->add_option("-i,--input", sg.input, "Directory with g.fts, s.fts, mask.fts")->required();
    c_sg->add_option("-o,--out", sg.out, "Output directory (default: input)");
    c_sg->add_option("-k", sg.k, "Cluster count")->check(CLI::Range(1, 255));
    c_sg->add_option("--radius", sg.radius, "inf, auto, a number or a JSON array");
    c_sg->add_option("--seed", sg.seed, "Seed for k-means++");
    c_sg->add_option("--truth", sg.truth, "Truth label stack for the misassignment rate");

    RenderArgs rd;
    auto* c_rd = app.add_subcommand("render", "Write composite, phasor plot and segmentation images");
    c_rd->add_option("-i,--input", rd.input, "Stage directory")->required();
    c_rd->add_option("-o,--out", rd.out, "Output directory (default: input)");
    c_rd->add_option("--slice", rd.slice, "Slice index");
    c_rd->add_option("--tau-lo", rd.tau_lo, "Lifetime at the red end, ns");
    c_rd->add_option("--tau-hi", rd.tau_hi, "Lifetime at the blue end, ns");
    c_rd->add_option("--gamma", rd.gamma, "Histogram display gamma")->check(CLI::PositiveNumber);

    PipelineArgs pl;
    auto* c_pl = app.add_subcommand("pipeline", "Run every stage from a JSON config");
    c_pl->add_option("config", pl.config, "Pipeline config")->required();
    c_pl->add_option("-o,--out", pl.out, "Override outputs.directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (threads > 0) set_thread_count(threads);
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_ph->parsed()) return run_phasor(ph);
        if (c_dn->parsed()) return run_denoise(dn);
        if (c_tr->parsed()) return run_train(tr);
        if (c_sg->parsed()) return run_segment(sg);
        if (c_rd->parsed()) return run_render(rd);
        if (c_pl->parsed()) return run_pipeline_command(pl);
    } catch (const Error& e) {
        std::cerr << "phasor-forge: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const json::exception& e) {
        std::cerr << "phasor-forge: malformed JSON value: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "phasor-forge: " << e.what() << "\n";
        return kOther;
    }
    return kUsage;
}
