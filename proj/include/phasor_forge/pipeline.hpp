#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "phasor_forge/denoise.hpp"
#include "phasor_forge/phasor.hpp"
#include "phasor_forge/segment.hpp"
#include "phasor_forge/simulate.hpp"

namespace phasor_forge {

struct AcquisitionConfig {
    std::string source = "mixers";  // "mixers" | "decay"
    double f_mod_hz = kDefaultModulationHz;
    double gain = 0.5;
    double offset = 0.5;
    double intensity_threshold = 0.01;
    std::optional<double> calibration_tau_ns;
    std::size_t n_bins = 256;
    double photons_per_unit_intensity = 100.0;

    double omega() const { return omega_from_frequency(f_mod_hz); }
};

struct TrainingDataConfig {
    int pairs = 64;
    std::size_t image_size = 64;
    std::uint64_t seed = 1000;
};

struct DenoiseConfig {
    std::string method = "median";  // "median" | "cnn" | "none"
    int passes = 2;
    int window = 3;
    std::optional<std::filesystem::path> model_path;
    std::optional<TrainConfig> train;
    TrainingDataConfig train_data;
};

struct SegmentConfig {
    int k = 3;
    RadiusSpec radius;
    std::uint64_t seed = 7;
    int max_iter = 100;
    double tol = 1e-6;
};

struct RenderConfig {
    double tau_lo_ns = 0.0;
    double tau_hi_ns = 3.0;
    std::size_t slice = 0;
    std::size_t hist_bins_g = 256;
    std::size_t hist_bins_s = 154;
    double gamma = 0.5;
};

struct PipelineConfig {
    Phantom phantom;
    NoiseSpec noise{100.0, 0.05, 1};
    AcquisitionConfig acquisition;
    DenoiseConfig denoise;
    SegmentConfig segment;
    RenderConfig render;
    std::filesystem::path output_dir = "out";
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : base_dir / p;
    }
};

/// Parses a pipeline document. Unknown keys and wrong types are rejected with
/// Config errors naming the JSON pointer of the offending field; syntax errors
/// report line and column.
PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Sections shared with the per-stage CLI commands.
Phantom parse_phantom(const nlohmann::json& j, const std::string& where);
NoiseSpec parse_noise(const nlohmann::json& j, const std::string& where);
AcquisitionConfig parse_acquisition(const nlohmann::json& j, const std::string& where);
TrainConfig parse_train(const nlohmann::json& j, const std::string& where);
RadiusSpec parse_radius(const nlohmann::json& j, const std::string& where);

// (noisy, clean) g and s images from random phantoms through the mixer path,
// alternating g and s so half the pairs are each.
std::vector<ImagePair> synthetic_training_pairs(const TrainingDataConfig& data, const NoiseSpec& noise,
                                                const AcquisitionConfig& acq);

struct StageOutputs {
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files;  // relative name, bytes
    nlohmann::json report;
};

/// Runs simulate -> phasor -> denoise -> segment -> render fully in memory.
StageOutputs execute_pipeline(const PipelineConfig& cfg);

/// execute_pipeline, then writes every output (report.json last) into the
/// output directory. Nothing is written when any stage fails.
nlohmann::json run_pipeline(const PipelineConfig& cfg);

nlohmann::json cluster_report(const ClusterResult& cluster, const SegmentationMap& map);

}  // namespace phasor_forge
