#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "phasor_forge/core.hpp"

namespace phasor_forge {

struct PhasorPoint {
    double g = 0.0;
    double s = 0.0;
    friend bool operator==(const PhasorPoint&, const PhasorPoint&) = default;
};

struct KMeansResult {
    std::vector<PhasorPoint> centroids;
    std::vector<std::uint32_t> assignments;
    double objective = 0.0;
    int iterations = 0;
    // Objective after each assignment step.
    std::vector<double> objective_history;
};

/// Lloyd's algorithm from k-means++ seeding. Stops when no centroid moves more
/// than tol or after max_iter iterations. Ties go to the lowest cluster index;
/// an emptied cluster is re-seeded at the point farthest from its centroid.
/// Throws TooFewDistinctPoints when fewer than k distinct points exist.
KMeansResult kmeans(std::span<const PhasorPoint> points, int k, std::uint64_t seed, int max_iter = 100,
                    double tol = 1e-6);

// Per-cluster membership radius. Infinite radius is plain Voronoi k-means;
// auto_rms uses 2x each cluster's RMS distance to its centroid.
struct RadiusSpec {
    enum class Mode { infinite, uniform, per_cluster, auto_rms };
    Mode mode = Mode::infinite;
    double value = std::numeric_limits<double>::infinity();
    std::vector<double> values;

    static RadiusSpec infinite() { return {}; }
    static RadiusSpec uniform(double r) { return {Mode::uniform, r, {}}; }
    static RadiusSpec per_cluster(std::vector<double> r) { return {Mode::per_cluster, 0.0, std::move(r)}; }
    static RadiusSpec auto_rms() { return {Mode::auto_rms, 0.0, {}}; }
};

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct ClusterResult {
    std::vector<PhasorPoint> centroids;  // sorted by descending lifetime
    std::vector<double> radii;
    std::vector<std::uint8_t> labels;  // per pixel, 0 = unlabeled
    std::vector<std::size_t> pixel_counts;
    double objective = 0.0;
    int iterations = 0;
};

struct SegmentationMap {
    LabelField labels;
    std::vector<double> cluster_lifetimes_ns;  // NaN for degenerate centroids
    std::vector<Rgb> palette;                  // palette[i - 1] colours label i
};

// Hue ramp from blue (label 1, longest lifetime) to red (label k).
std::vector<Rgb> default_palette(std::size_t k);

struct SegmentOptions {
    int max_iter = 100;
    double tol = 1e-6;
};

/// K-means over the masked-in (g, s) points of a field. Labels are numbered by
/// descending centroid lifetime; pixels outside their cluster's radius stay 0.
/// intensity_mask, when given, further restricts the clustered pixels.
std::pair<ClusterResult, SegmentationMap> segment_phasor(const PhasorField& field, int k, const RadiusSpec& radius,
                                                         std::uint64_t seed,
                                                         const std::optional<Mask>& intensity_mask = std::nullopt,
                                                         const SegmentOptions& opts = {});

/// Fraction of truth-labelled pixels whose label disagrees with the truth
/// under the best one-to-one relabelling. Unlabeled pixels count as errors.
/// Throws KTooLargeForExactMatching above 6 classes.
double misassignment_rate(const SegmentationMap& map, const LabelField& truth);

}  // namespace phasor_forge
