#include <fstream>
#include <set>
#include <sstream>

#include "phasor_forge/io.hpp"
#include "phasor_forge/pipeline.hpp"

namespace phasor_forge {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::Config, (where.empty() ? std::string("/") : where) + ": " + what);
}

// Typed access to one JSON object; finish() rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail(where_, "expected an object");
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    std::string path(const std::string& key) const { return where_ + "/" + key; }
    const json& raw(const std::string& key) {
        known_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback, double min = -1e300, bool exclusive = false) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number()) fail(path(key), "expected a number");
        const double d = v.get<double>();
        if (exclusive ? !(d > min) : !(d >= min)) {
            fail(path(key), std::string("must be ") + (exclusive ? "> " : ">= ") + std::to_string(min));
        }
        return d;
    }
    long long integer(const std::string& key, long long fallback, long long min) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) fail(path(key), "expected an integer");
        const auto i = v.get<long long>();
        if (i < min) fail(path(key), "must be >= " + std::to_string(min));
        return i;
    }
    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(path(key), "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }
    std::string string(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_string()) fail(path(key), "expected a string");
        const auto s = v.get<std::string>();
        if (allowed.size() > 0) {
            bool ok = false;
            std::string list;
            for (const char* a : allowed) {
                ok = ok || s == a;
                list += std::string(list.empty() ? "" : ", ") + a;
            }
            if (!ok) fail(path(key), "must be one of " + list);
        }
        return s;
    }
    std::vector<double> numbers(const std::string& key, std::size_t count) {
        const json& v = raw(key);
        if (!v.is_array() || v.size() != count) fail(path(key), "expected an array of " + std::to_string(count) + " numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(path(key), "expected numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<std::size_t> counts(const std::string& key, std::size_t count) {
        const json& v = raw(key);
        if (!v.is_array() || v.size() != count) fail(path(key), "expected an array of " + std::to_string(count) + " integers");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 0) fail(path(key), "expected non-negative integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!known_.count(key)) fail(path(key), "unknown key");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> known_;
};

Dims parse_dims(Section& sec, const std::string& key, Dims fallback) {
    if (!sec.has(key)) return fallback;
    const auto d = sec.counts(key, 3);
    if (d[0] == 0 || d[1] == 0 || d[2] == 0) fail(sec.path(key), "dims must be positive");
    return {d[0], d[1], d[2]};
}

Region parse_region(const json& j, const std::string& where, const Dims& dims) {
    Section sec(j, where);
    Region region;
    region.tau_ns = sec.number("tau_ns", 1.0, 0.0);
    region.intensity = sec.number("intensity", 1.0, 0.0);
    const bool box = sec.has("box");
    const bool disc = sec.has("disc");
    if (box == disc) fail(where, "region needs exactly one of box or disc");
    if (box) {
        const auto b = sec.counts("box", 6);
        region.shape = Box{b[0], b[1], b[2], b[3], b[4], b[5]};
    } else {
        Section d(sec.raw("disc"), sec.path("disc"));
        Disc shape{0, dims.nz, 0.0, 0.0, 0.0};
        if (d.has("z")) {
            const auto z = d.counts("z", 2);
            shape.z0 = z[0];
            shape.z1 = z[1];
        }
        const auto c = d.numbers("center", 2);
        shape.cy = c[0];
        shape.cx = c[1];
        shape.radius = d.number("radius", 0.0, 0.0);
        d.finish();
        region.shape = shape;
    }
    sec.finish();
    return region;
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorCode::Config, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                                           e.what());
    }
}

}  // namespace

Phantom parse_phantom(const json& j, const std::string& where) {
    Section sec(j, where);
    const std::string preset = sec.string("preset", "", {"three_tau", "two_cluster"});
    Phantom p;
    if (preset == "three_tau") {
        p = three_tau_phantom(parse_dims(sec, "dims", {4, 128, 128}));
    } else if (preset == "two_cluster") {
        p = two_cluster_phantom(parse_dims(sec, "dims", {4, 128, 128}));
    } else {
        if (!sec.has("dims")) fail(sec.path("dims"), "required without a preset");
        p.dims = parse_dims(sec, "dims", {});
        if (sec.has("background")) {
            Section bg(sec.raw("background"), sec.path("background"));
            p.background.tau_ns = bg.number("tau_ns", 0.0, 0.0);
            p.background.intensity = bg.number("intensity", 0.0, 0.0);
            bg.finish();
        }
        if (sec.has("regions")) {
            const json& regions = sec.raw("regions");
            if (!regions.is_array()) fail(sec.path("regions"), "expected an array");
            for (std::size_t i = 0; i < regions.size(); ++i) {
                p.regions.push_back(parse_region(regions[i], sec.path("regions") + "/" + std::to_string(i), p.dims));
            }
        }
    }
    sec.finish();
    try {
        p.validate();
    } catch (const Error& e) {
        fail(where, e.what());
    }
    return p;
}

NoiseSpec parse_noise(const json& j, const std::string& where) {
    Section sec(j, where);
    NoiseSpec n;
    n.photon_scale = sec.number("photon_scale", n.photon_scale, 0.0);
    n.gaussian_sigma = sec.number("gaussian_sigma", n.gaussian_sigma, 0.0);
    n.seed = sec.seed("seed", 1);
    sec.finish();
    return n;
}

AcquisitionConfig parse_acquisition(const json& j, const std::string& where) {
    Section sec(j, where);
    AcquisitionConfig a;
    a.source = sec.string("source", a.source, {"mixers", "decay"});
    a.f_mod_hz = sec.number("f_mod_hz", a.f_mod_hz, 0.0, true);
    a.gain = sec.number("gain", a.gain, 0.0, true);
    a.offset = sec.number("offset", a.offset);
    a.intensity_threshold = sec.number("intensity_threshold", a.intensity_threshold, 0.0);
    if (sec.has("calibration_tau_ns")) a.calibration_tau_ns = sec.number("calibration_tau_ns", 0.0, 0.0);
    a.n_bins = static_cast<std::size_t>(sec.integer("n_bins", static_cast<long long>(a.n_bins), 4));
    a.photons_per_unit_intensity = sec.number("photons_per_unit_intensity", a.photons_per_unit_intensity, 0.0);
    sec.finish();
    return a;
}

TrainConfig parse_train(const json& j, const std::string& where) {
    Section sec(j, where);
    TrainConfig t;
    t.epochs = static_cast<int>(sec.integer("epochs", t.epochs, 1));
    t.batch_size = static_cast<int>(sec.integer("batch_size", t.batch_size, 1));
    t.patch_size = static_cast<int>(sec.integer("patch_size", t.patch_size, 1));
    t.learning_rate = sec.number("learning_rate", t.learning_rate, 0.0);
    t.momentum = sec.number("momentum", t.momentum, 0.0);
    if (t.momentum >= 1.0) fail(sec.path("momentum"), "must be < 1");
    t.seed = sec.seed("seed", t.seed);
    t.architecture.depth = static_cast<int>(sec.integer("depth", t.architecture.depth, 1));
    t.architecture.channels = static_cast<int>(sec.integer("channels", t.architecture.channels, 1));
    sec.finish();
    return t;
}

RadiusSpec parse_radius(const json& j, const std::string& where) {
    if (j.is_null()) return RadiusSpec::infinite();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "auto") return RadiusSpec::auto_rms();
        if (s == "inf" || s == "infinite") return RadiusSpec::infinite();
        fail(where, "expected a number, an array, \"auto\" or \"inf\"");
    }
    if (j.is_number()) {
        if (!(j.get<double>() >= 0.0)) fail(where, "radius must be >= 0");
        return RadiusSpec::uniform(j.get<double>());
    }
    if (j.is_array()) {
        std::vector<double> r;
        for (const auto& e : j) {
            if (!e.is_number() || !(e.get<double>() >= 0.0)) fail(where, "radii must be numbers >= 0");
            r.push_back(e.get<double>());
        }
        return RadiusSpec::per_cluster(std::move(r));
    }
    fail(where, "expected a number, an array, \"auto\" or \"inf\"");
}

PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir) {
    const json doc = parse_json(text);
    Section root(doc, "");
    PipelineConfig cfg;
    cfg.base_dir = base_dir;
    if (!root.has("phantom")) fail("/phantom", "required");
    cfg.phantom = parse_phantom(root.raw("phantom"), "/phantom");
    if (root.has("noise")) cfg.noise = parse_noise(root.raw("noise"), "/noise");
    if (root.has("acquisition")) cfg.acquisition = parse_acquisition(root.raw("acquisition"), "/acquisition");

    if (root.has("denoise")) {
        Section sec(root.raw("denoise"), "/denoise");
        auto& d = cfg.denoise;
        d.method = sec.string("method", d.method, {"median", "cnn", "none"});
        d.passes = static_cast<int>(sec.integer("passes", d.passes, 1));
        d.window = static_cast<int>(sec.integer("window", d.window, 3));
        if (d.window % 2 == 0) fail(sec.path("window"), "must be odd");
        if (sec.has("model_path")) {
            if (!sec.raw("model_path").is_string()) fail(sec.path("model_path"), "expected a string");
            d.model_path = cfg.resolve(sec.raw("model_path").get<std::string>());
        }
        if (sec.has("train")) {
            const json& tj = sec.raw("train");
            // training-data keys live beside the optimizer keys
            json optim = json::object();
            json data = json::object();
            if (!tj.is_object()) fail(sec.path("train"), "expected an object");
            for (const auto& [key, value] : tj.items()) {
                (key == "pairs" || key == "image_size" || key == "data_seed" ? data : optim)[key] = value;
            }
            d.train = parse_train(optim, sec.path("train"));
            Section ds(data, sec.path("train"));
            d.train_data.pairs = static_cast<int>(ds.integer("pairs", d.train_data.pairs, 1));
            d.train_data.image_size =
                static_cast<std::size_t>(ds.integer("image_size", static_cast<long long>(d.train_data.image_size), 8));
            d.train_data.seed = ds.seed("data_seed", d.train_data.seed);
            ds.finish();
            if (d.train->patch_size > static_cast<int>(d.train_data.image_size)) {
                fail(sec.path("train") + "/patch_size", "must not exceed image_size");
            }
        }
        if (d.method == "cnn" && !d.model_path && !d.train) {
            fail("/denoise", "method cnn needs model_path or train");
        }
        sec.finish();
    }

    if (root.has("segment")) {
        Section sec(root.raw("segment"), "/segment");
        auto& s = cfg.segment;
        s.k = static_cast<int>(sec.integer("k", s.k, 1));
        if (s.k > 255) fail(sec.path("k"), "must be <= 255");
        if (sec.has("radius")) s.radius = parse_radius(sec.raw("radius"), sec.path("radius"));
        if (s.radius.mode == RadiusSpec::Mode::per_cluster && s.radius.values.size() != static_cast<std::size_t>(s.k)) {
            fail(sec.path("radius"), "needs one radius per cluster");
        }
        s.seed = sec.seed("seed", s.seed);
        s.max_iter = static_cast<int>(sec.integer("max_iter", s.max_iter, 1));
        s.tol = sec.number("tol", s.tol, 0.0);
        sec.finish();
    }

    if (root.has("render")) {
        Section sec(root.raw("render"), "/render");
        auto& r = cfg.render;
        if (sec.has("tau_range_ns")) {
            const auto range = sec.numbers("tau_range_ns", 2);
            if (!(range[1] > range[0])) fail(sec.path("tau_range_ns"), "needs hi > lo");
            r.tau_lo_ns = range[0];
            r.tau_hi_ns = range[1];
        }
        r.slice = static_cast<std::size_t>(sec.integer("slice", 0, 0));
        if (r.slice >= cfg.phantom.dims.nz) fail(sec.path("slice"), "outside the volume");
        if (sec.has("hist_bins")) {
            const auto b = sec.counts("hist_bins", 2);
            if (b[0] == 0 || b[1] == 0) fail(sec.path("hist_bins"), "must be positive");
            r.hist_bins_g = b[0];
            r.hist_bins_s = b[1];
        }
        r.gamma = sec.number("gamma", r.gamma, 0.0, true);
        sec.finish();
    }

    if (root.has("outputs")) {
        Section sec(root.raw("outputs"), "/outputs");
        if (sec.has("directory")) {
            if (!sec.raw("directory").is_string()) fail(sec.path("directory"), "expected a string");
            cfg.output_dir = sec.raw("directory").get<std::string>();
        }
        sec.finish();
    }
    cfg.output_dir = cfg.resolve(cfg.output_dir);
    root.finish();
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_pipeline_config(std::string(bytes.begin(), bytes.end()), path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace phasor_forge
