#include "phasor_forge/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "phasor_forge/parallel.hpp"
#include "phasor_forge/rng.hpp"

namespace phasor_forge {

namespace {

constexpr std::uint32_t kSeedingChannel = 0x6b6du;
constexpr std::size_t kChunk = 4096;

inline double dist2(const PhasorPoint& a, const PhasorPoint& b) {
    const double dg = a.g - b.g;
    const double ds = a.s - b.s;
    return dg * dg + ds * ds;
}

std::size_t count_distinct(std::span<const PhasorPoint> points) {
    std::vector<PhasorPoint> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.g < b.g || (a.g == b.g && a.s < b.s); });
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

std::vector<PhasorPoint> seed_plus_plus(std::span<const PhasorPoint> points, std::size_t k, std::uint64_t seed) {
    CounterStream stream(seed, 0, kSeedingChannel);
    const std::size_t n = points.size();
    std::vector<PhasorPoint> centers;
    centers.push_back(points[std::min(n - 1, static_cast<std::size_t>(stream.uniform() * static_cast<double>(n)))]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(points[i], centers[0]);
    while (centers.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        const double target = stream.uniform() * total;
        double cum = 0.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            cum += d2[i];
            pick = i;
            if (cum >= target) break;
        }
        centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], dist2(points[i], centers.back()));
    }
    return centers;
}

// Nearest-centroid assignment; returns the objective summed in chunk order.
double assign(std::span<const PhasorPoint> points, const std::vector<PhasorPoint>& centroids,
              std::vector<std::uint32_t>& labels) {
    const std::size_t n = points.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(chunks, 0.0);
    parallel_for(chunks, [&](std::size_t c) {
        double acc = 0.0;
        for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
            std::uint32_t best = 0;
            double best_d = dist2(points[i], centroids[0]);
            for (std::uint32_t j = 1; j < centroids.size(); ++j) {
                const double d = dist2(points[i], centroids[j]);
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            labels[i] = best;
            acc += best_d;
        }
        partial[c] = acc;
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return total;
}

// Cluster means, clamped to each cluster's bounding box so that a cluster of
// identical points gets exactly that point.
std::vector<PhasorPoint> means(std::span<const PhasorPoint> points, const std::vector<std::uint32_t>& labels,
                               const std::vector<PhasorPoint>& previous) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t n = points.size();
    const std::size_t k = previous.size();
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> sums(chunks * k * 3, 0.0);
    std::vector<double> bounds(chunks * k * 4);
    for (std::size_t i = 0; i < bounds.size(); i += 4) {
        bounds[i] = inf;
        bounds[i + 1] = -inf;
        bounds[i + 2] = inf;
        bounds[i + 3] = -inf;
    }
    parallel_for(chunks, [&](std::size_t c) {
        double* acc = sums.data() + c * k * 3;
        double* box = bounds.data() + c * k * 4;
        for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
            const std::size_t j = labels[i];
            acc[j * 3] += points[i].g;
            acc[j * 3 + 1] += points[i].s;
            acc[j * 3 + 2] += 1.0;
            box[j * 4] = std::min(box[j * 4], points[i].g);
            box[j * 4 + 1] = std::max(box[j * 4 + 1], points[i].g);
            box[j * 4 + 2] = std::min(box[j * 4 + 2], points[i].s);
            box[j * 4 + 3] = std::max(box[j * 4 + 3], points[i].s);
        }
    });
    std::vector<PhasorPoint> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        double sg = 0.0, ss = 0.0, cnt = 0.0;
        double g_lo = inf, g_hi = -inf, s_lo = inf, s_hi = -inf;
        for (std::size_t c = 0; c < chunks; ++c) {
            sg += sums[(c * k + j) * 3];
            ss += sums[(c * k + j) * 3 + 1];
            cnt += sums[(c * k + j) * 3 + 2];
            const double* box = bounds.data() + (c * k + j) * 4;
            g_lo = std::min(g_lo, box[0]);
            g_hi = std::max(g_hi, box[1]);
            s_lo = std::min(s_lo, box[2]);
            s_hi = std::max(s_hi, box[3]);
        }
        out[j] = cnt > 0.0 ? PhasorPoint{std::clamp(sg / cnt, g_lo, g_hi), std::clamp(ss / cnt, s_lo, s_hi)}
                           : previous[j];
    }
    return out;
}

void rescue_empty(std::span<const PhasorPoint> points, std::vector<PhasorPoint>& centroids,
                  std::vector<std::uint32_t>& labels) {
    const std::size_t k = centroids.size();
    for (std::size_t guard = 0; guard < k; ++guard) {
        std::vector<std::size_t> counts(k, 0);
        for (auto l : labels) ++counts[l];
        const auto empty = std::find(counts.begin(), counts.end(), 0u);
        if (empty == counts.end()) return;
        const auto j = static_cast<std::uint32_t>(empty - counts.begin());
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = dist2(points[i], centroids[labels[i]]);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        centroids[j] = points[far];
        labels[far] = j;
    }
}

}  // namespace

KMeansResult kmeans(std::span<const PhasorPoint> points, int k, std::uint64_t seed, int max_iter, double tol) {
    if (k < 1 || k > 255) throw Error(ErrorCode::InvalidArgument, "k must be in [1, 255]");
    if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
    const auto kk = static_cast<std::size_t>(k);
    if (count_distinct(points) < kk) {
        throw Error(ErrorCode::TooFewDistinctPoints, "fewer than k distinct points");
    }
    KMeansResult result;
    result.centroids = seed_plus_plus(points, kk, seed);
    result.assignments.assign(points.size(), 0);
    for (int it = 1; it <= max_iter; ++it) {
        const double objective = assign(points, result.centroids, result.assignments);
        if (!result.objective_history.empty()) {
            const double prev = result.objective_history.back();
            if (objective > prev + 1e-12 * std::abs(prev) + 1e-300) {
                throw std::logic_error("k-means objective increased from " + std::to_string(prev) + " to " +
                                       std::to_string(objective));
            }
        }
        result.objective_history.push_back(objective);
        rescue_empty(points, result.centroids, result.assignments);
        const auto updated = means(points, result.assignments, result.centroids);
        double movement = 0.0;
        for (std::size_t j = 0; j < kk; ++j) {
            movement = std::max(movement, std::sqrt(dist2(updated[j], result.centroids[j])));
        }
        result.centroids = updated;
        result.iterations = it;
        if (movement < tol) break;
    }
    result.objective = assign(points, result.centroids, result.assignments);
    return result;
}

std::vector<Rgb> default_palette(std::size_t k) {
    std::vector<Rgb> palette;
    for (std::size_t i = 0; i < k; ++i) {
        const double hue = k == 1 ? 240.0 : 240.0 * (1.0 - static_cast<double>(i) / static_cast<double>(k - 1));
        const double h = hue / 60.0;
        const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
        double r = 0, g = 0, b = 0;
        switch (static_cast<int>(h) % 6) {
            case 0: r = 1; g = x; break;
            case 1: r = x; g = 1; break;
            case 2: g = 1; b = x; break;
            case 3: g = x; b = 1; break;
            case 4: r = x; b = 1; break;
            default: r = 1; b = x; break;
        }
        palette.push_back({static_cast<std::uint8_t>(std::lround(r * 255)), static_cast<std::uint8_t>(std::lround(g * 255)),
                           static_cast<std::uint8_t>(std::lround(b * 255))});
    }
    return palette;
}

std::pair<ClusterResult, SegmentationMap> segment_phasor(const PhasorField& field, int k, const RadiusSpec& radius,
                                                         std::uint64_t seed, const std::optional<Mask>& intensity_mask,
                                                         const SegmentOptions& opts) {
    field.validate();
    if (intensity_mask && intensity_mask->size() != field.mask.size()) {
        throw Error(ErrorCode::InvalidArgument, "intensity mask size mismatch");
    }
    std::vector<std::size_t> pixels;
    std::vector<PhasorPoint> points;
    for (std::size_t i = 0; i < field.mask.size(); ++i) {
        if (!field.mask[i] || (intensity_mask && !(*intensity_mask)[i])) continue;
        pixels.push_back(i);
        points.push_back({field.g[i], field.s[i]});
    }
    if (points.size() < static_cast<std::size_t>(std::max(k, 1))) {
        throw Error(ErrorCode::TooFewDistinctPoints, "fewer masked-in pixels than clusters");
    }
    const auto km = kmeans(points, k, seed, opts.max_iter, opts.tol);
    const auto kk = static_cast<std::size_t>(k);

    std::vector<double> tau(kk);
    for (std::size_t j = 0; j < kk; ++j) {
        const auto& c = km.centroids[j];
        tau[j] = std::abs(c.g) >= kEpsG ? s_to_ns(c.s / (field.omega * c.g)) : std::numeric_limits<double>::quiet_NaN();
    }
    std::vector<std::size_t> order(kk);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::isnan(tau[a])) return false;
        if (std::isnan(tau[b])) return true;
        return tau[a] > tau[b];
    });
    std::vector<std::size_t> rank(kk);
    for (std::size_t r = 0; r < kk; ++r) rank[order[r]] = r;

    ClusterResult cluster;
    cluster.objective = km.objective;
    cluster.iterations = km.iterations;
    for (std::size_t r = 0; r < kk; ++r) cluster.centroids.push_back(km.centroids[order[r]]);

    switch (radius.mode) {
        case RadiusSpec::Mode::infinite:
            cluster.radii.assign(kk, std::numeric_limits<double>::infinity());
            break;
        case RadiusSpec::Mode::uniform:
            if (!(radius.value >= 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
            cluster.radii.assign(kk, radius.value);
            break;
        case RadiusSpec::Mode::per_cluster:
            if (radius.values.size() != kk) throw Error(ErrorCode::InvalidArgument, "need one radius per cluster");
            for (double r : radius.values) {
                if (!(r >= 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
            }
            cluster.radii = radius.values;
            break;
        case RadiusSpec::Mode::auto_rms: {
            std::vector<double> sum(kk, 0.0);
            std::vector<double> cnt(kk, 0.0);
            for (std::size_t i = 0; i < points.size(); ++i) {
                const auto j = km.assignments[i];
                sum[rank[j]] += dist2(points[i], km.centroids[j]);
                cnt[rank[j]] += 1.0;
            }
            for (std::size_t r = 0; r < kk; ++r) {
                cluster.radii.push_back(cnt[r] > 0.0 ? 2.0 * std::sqrt(sum[r] / cnt[r]) : 0.0);
            }
            break;
        }
    }

    cluster.labels.assign(field.mask.size(), 0);
    cluster.pixel_counts.assign(kk, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto j = km.assignments[i];
        const std::size_t r = rank[j];
        if (std::sqrt(dist2(points[i], km.centroids[j])) < cluster.radii[r]) {
            cluster.labels[pixels[i]] = static_cast<std::uint8_t>(r + 1);
            ++cluster.pixel_counts[r];
        }
    }

    SegmentationMap map;
    map.labels = {field.dims(), cluster.labels};
    for (std::size_t r = 0; r < kk; ++r) map.cluster_lifetimes_ns.push_back(tau[order[r]]);
    map.palette = default_palette(kk);
    return {std::move(cluster), std::move(map)};
}

double misassignment_rate(const SegmentationMap& map, const LabelField& truth) {
    if (!(map.labels.dims == truth.dims) || map.labels.labels.size() != truth.labels.size()) {
        throw Error(ErrorCode::InvalidArgument, "segmentation and truth dims differ");
    }
    std::size_t k = 0;
    for (auto l : map.labels.labels) k = std::max<std::size_t>(k, l);
    for (auto l : truth.labels) k = std::max<std::size_t>(k, l);
    if (k > 6) throw Error(ErrorCode::KTooLargeForExactMatching, "exact matching supports at most 6 classes");
    if (k == 0) return 0.0;
    // confusion[m][t], m = predicted label (0 = unlabeled), t = truth label
    std::vector<std::size_t> confusion((k + 1) * (k + 1), 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        if (truth.labels[i] == 0) continue;
        ++confusion[map.labels.labels[i] * (k + 1) + truth.labels[i]];
        ++total;
    }
    if (total == 0) return 0.0;
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 1);
    std::size_t best = 0;
    do {
        std::size_t matches = 0;
        for (std::size_t m = 1; m <= k; ++m) matches += confusion[m * (k + 1) + perm[m - 1]];
        best = std::max(best, matches);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return 1.0 - static_cast<double>(best) / static_cast<double>(total);
}

}  // namespace phasor_forge
