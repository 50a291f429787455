#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trajlens/csv.hpp"
#include "trajlens/error.hpp"
#include "trajlens/random.hpp"

namespace trajlens {

using Point2 = std::array<double, 2>;
using Series = std::vector<Point2>;

struct TimedPoint {
    double t = 0.0;
    double u1 = 0.0;
    double u2 = 0.0;
};

/// Reduced points of one patient ordered by time relative to diagnosis.
struct Trajectory {
    std::string patient_id;
    std::vector<TimedPoint> samples; ///< strictly increasing t
};

/// Values on the covered points of the alignment grid.
struct AlignedTrajectory {
    std::string patient_id;
    std::vector<double> grid;
    Series values;
};

/// One reduced snapshot with its time and window.
struct TrajectoryInput {
    std::string patient_id;
    int window = -1; ///< -1 when unknown
    double t = 0.0;
    double u1 = 0.0;
    double u2 = 0.0;
};

struct TrajectoryBuild {
    std::vector<Trajectory> trajectories;
    std::vector<std::string> excluded; ///< patients with too few samples
};

/**
 * Groups reduced snapshots per patient. Points from the same window (the
 * pieces of a split snapshot) are averaged into one sample when
 * `merge_windows` is set; samples with identical t are averaged; patients
 * with fewer than `min_samples` samples are excluded.
 */
inline TrajectoryBuild build_trajectories(std::span<const TrajectoryInput> inputs, std::size_t min_samples = 3, bool merge_windows = true) {
    std::map<std::string, std::vector<TrajectoryInput>> by_patient;
    for (const auto& in : inputs) {
        if (!std::isfinite(in.t) || !std::isfinite(in.u1) || !std::isfinite(in.u2)) {
            throw DataError("non-finite trajectory sample for patient '" + in.patient_id + "'");
        }
        by_patient[in.patient_id].push_back(in);
    }

    auto average = [](std::span<const TimedPoint> pts) {
        TimedPoint m;
        for (const auto& p : pts) {
            m.t += p.t;
            m.u1 += p.u1;
            m.u2 += p.u2;
        }
        const auto n = static_cast<double>(pts.size());
        return TimedPoint{m.t / n, m.u1 / n, m.u2 / n};
    };

    TrajectoryBuild out;
    for (auto& [pid, rows] : by_patient) {
        std::vector<TimedPoint> samples;
        std::map<int, std::vector<TimedPoint>> windows;
        for (const auto& r : rows) {
            if (merge_windows && r.window >= 0) {
                windows[r.window].push_back({r.t, r.u1, r.u2});
            } else {
                samples.push_back({r.t, r.u1, r.u2});
            }
        }
        for (const auto& [w, pts] : windows) {
            samples.push_back(average(pts));
        }
        std::stable_sort(samples.begin(), samples.end(), [](const TimedPoint& a, const TimedPoint& b) { return a.t < b.t; });
        std::vector<TimedPoint> merged;
        for (std::size_t i = 0; i < samples.size();) {
            std::size_t j = i;
            while (j < samples.size() && samples[j].t == samples[i].t) {
                ++j;
            }
            merged.push_back(j - i == 1 ? samples[i] : average(std::span(samples).subspan(i, j - i)));
            i = j;
        }
        if (merged.size() < min_samples) {
            out.excluded.push_back(pid);
        } else {
            out.trajectories.push_back({pid, std::move(merged)});
        }
    }
    return out;
}

inline std::vector<double> default_grid() { return {-5.0, 0.0, 5.0, 10.0, 15.0}; }

/// Linear interpolation at grid points inside the observed time range; no extrapolation.
/// Returns nothing when fewer than `min_points` grid points are covered.
inline std::optional<AlignedTrajectory> interpolate(const Trajectory& tr, std::span<const double> grid, std::size_t min_points = 3) {
    AlignedTrajectory out;
    out.patient_id = tr.patient_id;
    if (tr.samples.empty()) {
        return std::nullopt;
    }
    const auto& s = tr.samples;
    for (double g : grid) {
        if (g < s.front().t || g > s.back().t) {
            continue;
        }
        std::size_t hi = 0;
        while (hi < s.size() && s[hi].t < g) {
            ++hi;
        }
        Point2 v;
        if (s[hi].t == g) {
            v = {s[hi].u1, s[hi].u2};
        } else {
            const auto& p0 = s[hi - 1];
            const auto& p1 = s[hi];
            const double frac = (g - p0.t) / (p1.t - p0.t);
            v = {p0.u1 + frac * (p1.u1 - p0.u1), p0.u2 + frac * (p1.u2 - p0.u2)};
        }
        out.grid.push_back(g);
        out.values.push_back(v);
    }
    if (out.grid.size() < min_points) {
        return std::nullopt;
    }
    return out;
}

inline double euclidean(const Point2& a, const Point2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

/**
 * Dependent multivariate DTW: Euclidean local cost, steps (1,0), (0,1),
 * (1,1), no window. Returns the minimal summed cost along a monotone path.
 */
inline double dtw(std::span<const Point2> a, std::span<const Point2> b) {
    if (a.empty() || b.empty()) {
        throw DataError("dtw: empty series");
    }
    const std::size_t m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m, inf);
    std::vector<double> cur(m, inf);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double best;
            if (i == 0 && j == 0) {
                best = 0.0;
            } else {
                best = inf;
                if (i > 0) best = std::min(best, prev[j]);
                if (j > 0) best = std::min(best, cur[j - 1]);
                if (i > 0 && j > 0) best = std::min(best, prev[j - 1]);
            }
            cur[j] = best + euclidean(a[i], b[j]);
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

struct DtwAlignment {
    double cost = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> path; ///< from (0,0) to (|a|-1, |b|-1)
};

inline DtwAlignment dtw_path(std::span<const Point2> a, std::span<const Point2> b) {
    if (a.empty() || b.empty()) {
        throw DataError("dtw: empty series");
    }
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> acc(n * m, inf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double best = (i == 0 && j == 0) ? 0.0 : inf;
            if (i > 0) best = std::min(best, at(i - 1, j));
            if (j > 0) best = std::min(best, at(i, j - 1));
            if (i > 0 && j > 0) best = std::min(best, at(i - 1, j - 1));
            at(i, j) = best + euclidean(a[i], b[j]);
        }
    }
    DtwAlignment out;
    out.cost = at(n - 1, m - 1);
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    out.path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const double diag = at(i - 1, j - 1);
            const double up = at(i - 1, j);
            const double left = at(i, j - 1);
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        }
        out.path.emplace_back(i, j);
    }
    std::reverse(out.path.begin(), out.path.end());
    return out;
}

/// DTW barycenter averaging: re-estimates each centroid point as the mean of the member points aligned to it.
inline Series dba(Series centroid, std::span<const Series> members, int iterations = 10) {
    if (members.empty()) {
        return centroid;
    }
    for (int it = 0; it < iterations; ++it) {
        std::vector<Point2> sum(centroid.size(), Point2{0.0, 0.0});
        std::vector<std::size_t> count(centroid.size(), 0);
        for (const auto& s : members) {
            for (const auto& [ci, sj] : dtw_path(centroid, s).path) {
                sum[ci][0] += s[sj][0];
                sum[ci][1] += s[sj][1];
                ++count[ci];
            }
        }
        Series next(centroid.size());
        for (std::size_t i = 0; i < centroid.size(); ++i) {
            next[i] = {sum[i][0] / static_cast<double>(count[i]), sum[i][1] / static_cast<double>(count[i])};
        }
        if (next == centroid) {
            break;
        }
        centroid = std::move(next);
    }
    return centroid;
}

enum class CentroidRule { Dba, Medoid };

struct KMeansConfig {
    std::size_t k = 4;
    std::uint64_t seed = 0;
    int max_iterations = 50;
    int dba_iterations = 10;
    CentroidRule rule = CentroidRule::Dba;
};

struct ClusterModel {
    std::size_t k = 0;
    std::vector<int> assignments;
    std::vector<Series> centroids;
    double wcss = 0.0;
    std::vector<double> wcss_history; ///< after initialization, then after every outer iteration
    int iterations = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline double cluster_cost(const Series& centroid, std::span<const Series> members) {
    double cost = 0.0;
    for (const auto& s : members) {
        const double d = dtw(s, centroid);
        cost += d * d;
    }
    return cost;
}

inline Series medoid(std::span<const Series> members) {
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < members.size(); ++i) {
        const double c = cluster_cost(members[i], members);
        if (c < best_cost) {
            best_cost = c;
            best = i;
        }
    }
    return members[best];
}

} // namespace detail

/**
 * k-means over series with DTW distance.
 *
 * Seeding is k-means++ under DTW. Each iteration updates every centroid
 * (DBA or medoid, accepted only if the cluster cost does not rise), then
 * reassigns every series to its nearest centroid. A cluster that empties is
 * re-seeded with the series farthest from its centroid. Stops when
 * assignments no longer change or after `max_iterations`.
 */
inline ClusterModel dtw_kmeans(std::span<const Series> series, const KMeansConfig& cfg) {
    const std::size_t n = series.size();
    if (cfg.k == 0 || cfg.k > n) {
        throw ConfigError("dtw_kmeans: k=" + std::to_string(cfg.k) + " must be in [1, " + std::to_string(n) + "]");
    }
    for (const auto& s : series) {
        if (s.empty()) {
            throw DataError("dtw_kmeans: empty series");
        }
    }
    Rng rng(cfg.seed);
    ClusterModel model;
    model.k = cfg.k;
    model.seed = cfg.seed;

    // k-means++ seeding.
    std::vector<std::size_t> chosen{rng.index(n)};
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < cfg.k) {
        const Series& last = series[chosen.back()];
        std::vector<double> weights(n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = dtw(series[i], last);
            nearest[i] = std::min(nearest[i], d * d);
            weights[i] = nearest[i];
            total += weights[i];
        }
        for (std::size_t c : chosen) {
            weights[c] = 0.0;
        }
        if (!(total > 0.0) || std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    rest.push_back(i);
                }
            }
            chosen.push_back(rest[rng.index(rest.size())]);
        } else {
            chosen.push_back(rng.categorical(weights));
        }
    }
    for (std::size_t c : chosen) {
        model.centroids.push_back(series[c]);
    }

    std::vector<double> dist(n);
    auto assign = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < cfg.k; ++c) {
                const double d = dtw(series[i], model.centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            model.assignments[i] = best;
            dist[i] = best_d;
        }
        // Re-seed empty clusters from the farthest series of a multi-member cluster.
        for (std::size_t c = 0; c < cfg.k; ++c) {
            if (std::find(model.assignments.begin(), model.assignments.end(), static_cast<int>(c)) != model.assignments.end()) {
                continue;
            }
            std::vector<std::size_t> sizes(cfg.k, 0);
            for (int a : model.assignments) {
                ++sizes[static_cast<std::size_t>(a)];
            }
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[static_cast<std::size_t>(model.assignments[i])] > 1 && (far == n || dist[i] > dist[far])) {
                    far = i;
                }
            }
            model.centroids[c] = series[far];
            model.assignments[far] = static_cast<int>(c);
            dist[far] = 0.0;
        }
        double total = 0.0;
        for (double d : dist) {
            total += d * d;
        }
        return total;
    };

    model.assignments.assign(n, -1);
    model.wcss = assign();
    model.wcss_history.push_back(model.wcss);

    std::vector<Series> members;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        for (std::size_t c = 0; c < cfg.k; ++c) {
            members.clear();
            for (std::size_t i = 0; i < n; ++i) {
                if (model.assignments[i] == static_cast<int>(c)) {
                    members.push_back(series[i]);
                }
            }
            if (members.empty()) {
                continue;
            }
            Series candidate = cfg.rule == CentroidRule::Dba ? dba(model.centroids[c], members, cfg.dba_iterations) : detail::medoid(members);
            if (detail::cluster_cost(candidate, members) <= detail::cluster_cost(model.centroids[c], members)) {
                model.centroids[c] = std::move(candidate);
            }
        }
        const std::vector<int> previous = model.assignments;
        model.wcss = assign();
        model.wcss_history.push_back(model.wcss);
        model.iterations = iter + 1;
        if (model.assignments == previous) {
            break;
        }
    }
    return model;
}

/// Lowest-WCSS model over `seeds` runs with seeds derive_seed(base_seed, s).
inline ClusterModel best_of_seeds(std::span<const Series> series, KMeansConfig cfg, int seeds, std::uint64_t base_seed) {
    std::optional<ClusterModel> best;
    for (int s = 0; s < seeds; ++s) {
        cfg.seed = derive_seed(base_seed, static_cast<std::uint64_t>(s));
        ClusterModel m = dtw_kmeans(series, cfg);
        if (!best || m.wcss < best->wcss) {
            best = std::move(m);
        }
    }
    if (!best) {
        throw ConfigError("best_of_seeds: need at least one seed");
    }
    return *best;
}

struct WcssCell {
    std::size_t k = 0;
    int seed_index = 0;
    double wcss = 0.0;
};

struct WcssSweep {
    std::vector<WcssCell> cells;
    std::vector<std::size_t> ks;
    std::vector<double> best;   ///< min over seeds, per k
    std::vector<double> median; ///< per k
    std::size_t elbow = 0;
};

/// k at the largest second difference W(k-1) - 2 W(k) + W(k+1) of the per-k curve; ties go to the smaller k.
inline std::size_t elbow_pick(std::span<const std::size_t> ks, std::span<const double> wcss) {
    if (ks.size() != wcss.size() || ks.size() < 3) {
        throw ConfigError("elbow_pick: need at least three k values");
    }
    std::size_t pick = ks[1];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
        const double curvature = wcss[i - 1] - 2.0 * wcss[i] + wcss[i + 1];
        if (curvature > best) {
            best = curvature;
            pick = ks[i];
        }
    }
    return pick;
}

inline WcssSweep wcss_sweep(std::span<const Series> series, std::size_t k_min = 2, std::size_t k_max = 8, int seeds = 20,
                            std::uint64_t base_seed = 0, KMeansConfig cfg = {}) {
    if (k_min < 1 || k_max < k_min) {
        throw ConfigError("wcss_sweep: invalid k range");
    }
    WcssSweep out;
    for (std::size_t k = k_min; k <= std::min(k_max, series.size()); ++k) {
        std::vector<double> values;
        for (int s = 0; s < seeds; ++s) {
            cfg.k = k;
            cfg.seed = derive_seed(base_seed, static_cast<std::uint64_t>(s));
            const double w = dtw_kmeans(series, cfg).wcss;
            out.cells.push_back({k, s, w});
            values.push_back(w);
        }
        std::sort(values.begin(), values.end());
        const std::size_t mid = values.size() / 2;
        out.ks.push_back(k);
        out.best.push_back(values.front());
        out.median.push_back(values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]));
    }
    if (out.ks.size() >= 3) {
        out.elbow = elbow_pick(out.ks, out.best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cluster agreement

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) {
        throw DataError("adjusted_rand_index: length mismatch");
    }
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows;
    std::map<int, double> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0;
    for (const auto& [key, v] : table) {
        index += pairs(v);
    }
    double sum_rows = 0.0;
    double sum_cols = 0.0;
    for (const auto& [key, v] : rows) {
        sum_rows += pairs(v);
    }
    for (const auto& [key, v] : cols) {
        sum_cols += pairs(v);
    }
    const double total = pairs(static_cast<double>(a.size()));
    const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) {
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

/**
 * Maximum-weight assignment on a rectangular matrix (Hungarian method with
 * potentials). Returns, for each row, the matched column or -1.
 */
inline std::vector<int> hungarian_max(const std::vector<std::vector<double>>& weight) {
    const std::size_t rows = weight.size();
    const std::size_t cols = rows ? weight[0].size() : 0;
    const std::size_t n = std::max(rows, cols);
    if (n == 0) {
        return {};
    }
    double max_w = 0.0;
    for (const auto& r : weight) {
        for (double w : r) {
            max_w = std::max(max_w, w);
        }
    }
    // Square cost matrix, 1-indexed as in the classic formulation.
    std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, max_w));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            cost[i + 1][j + 1] = max_w - weight[i][j];
        }
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (!used[j]) {
                    const double cur = cost[i0][j] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> match(rows, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] >= 1 && p[j] <= rows && j <= cols) {
            match[p[j] - 1] = static_cast<int>(j - 1);
        }
    }
    return match;
}

/// patient id -> cluster label
using Labeling = std::map<std::string, int>;

struct MatchedPair {
    std::string combo_a;
    int cluster_a = 0;
    std::string combo_b;
    int cluster_b = 0;
    std::size_t overlap = 0;
    double jaccard = 0.0;
};

struct RobustnessReport {
    std::vector<std::string> combos;
    std::vector<MatchedPair> matches; ///< every ordered combo pair (a < b), one row per matched cluster pair
    std::vector<std::string> nodes;   ///< "combo:cluster"
    std::vector<std::vector<double>> jaccard_matrix;
    std::vector<std::vector<double>> overlap_matrix;
};

namespace detail {
inline std::map<int, std::set<std::string>> members_by_cluster(const Labeling& l) {
    std::map<int, std::set<std::string>> out;
    for (const auto& [pid, c] : l) {
        out[c].insert(pid);
    }
    return out;
}

inline std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t n = 0;
    for (const auto& x : a) {
        n += b.count(x);
    }
    return n;
}
} // namespace detail

/// Matched clusters between two labelings: the Hungarian assignment maximizing overlap.
inline std::vector<MatchedPair> match_clusters(const std::string& tag_a, const Labeling& a, const std::string& tag_b, const Labeling& b) {
    if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
        throw DataError("robustness: labelings '" + tag_a + "' and '" + tag_b + "' cover different patients");
    }
    const auto ca = detail::members_by_cluster(a);
    const auto cb = detail::members_by_cluster(b);
    std::vector<int> la;
    std::vector<int> lb;
    for (const auto& [c, m] : ca) la.push_back(c);
    for (const auto& [c, m] : cb) lb.push_back(c);
    std::vector<std::vector<double>> overlap(la.size(), std::vector<double>(lb.size(), 0.0));
    for (std::size_t i = 0; i < la.size(); ++i) {
        for (std::size_t j = 0; j < lb.size(); ++j) {
            overlap[i][j] = static_cast<double>(detail::intersection_size(ca.at(la[i]), cb.at(lb[j])));
        }
    }
    const auto match = hungarian_max(overlap);
    std::vector<MatchedPair> out;
    for (std::size_t i = 0; i < la.size(); ++i) {
        if (match[i] < 0) {
            continue;
        }
        const auto& sa = ca.at(la[i]);
        const auto& sb = cb.at(lb[static_cast<std::size_t>(match[i])]);
        const auto inter = static_cast<std::size_t>(overlap[i][static_cast<std::size_t>(match[i])]);
        const std::size_t uni = sa.size() + sb.size() - inter;
        out.push_back({tag_a, la[i], tag_b, lb[static_cast<std::size_t>(match[i])], inter, uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0});
    }
    return out;
}

/// Pairwise matched Jaccard across all labelings plus clustermap-ready node matrices.
inline RobustnessReport robustness(const std::map<std::string, Labeling>& labelings) {
    RobustnessReport r;
    for (const auto& [tag, l] : labelings) {
        r.combos.push_back(tag);
    }
    for (std::size_t i = 0; i < r.combos.size(); ++i) {
        for (std::size_t j = i + 1; j < r.combos.size(); ++j) {
            auto m = match_clusters(r.combos[i], labelings.at(r.combos[i]), r.combos[j], labelings.at(r.combos[j]));
            r.matches.insert(r.matches.end(), m.begin(), m.end());
        }
    }
    std::vector<std::set<std::string>> node_members;
    for (const auto& tag : r.combos) {
        for (const auto& [c, m] : detail::members_by_cluster(labelings.at(tag))) {
            r.nodes.push_back(tag + ":" + std::to_string(c));
            node_members.push_back(m);
        }
    }
    const std::size_t n = r.nodes.size();
    r.jaccard_matrix.assign(n, std::vector<double>(n, 0.0));
    r.overlap_matrix.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto inter = detail::intersection_size(node_members[i], node_members[j]);
            const std::size_t uni = node_members[i].size() + node_members[j].size() - inter;
            r.overlap_matrix[i][j] = static_cast<double>(inter);
            r.jaccard_matrix[i][j] = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Files

inline void write_wcss(const std::string& path, const WcssSweep& sweep) {
    csv::Table t;
    t.header = {"k", "seed", "wcss"};
    for (const auto& c : sweep.cells) {
        t.rows.push_back({std::to_string(c.k), std::to_string(c.seed_index), csv::format(c.wcss)});
    }
    csv::write(path, t);
}

inline void write_jaccard(const std::string& path, const RobustnessReport& r) {
    csv::Table t;
    t.header = {"combo_a", "cluster_a", "combo_b", "cluster_b", "overlap", "jaccard"};
    for (const auto& m : r.matches) {
        t.rows.push_back({m.combo_a, std::to_string(m.cluster_a), m.combo_b, std::to_string(m.cluster_b), std::to_string(m.overlap),
                          csv::format(m.jaccard)});
    }
    csv::write(path, t);
}

inline void write_node_matrix(const std::string& path, const std::vector<std::string>& nodes, const std::vector<std::vector<double>>& m) {
    csv::Table t;
    t.header = {"node"};
    t.header.insert(t.header.end(), nodes.begin(), nodes.end());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::vector<std::string> row{nodes[i]};
        for (double v : m[i]) {
            row.push_back(csv::format(v));
        }
        t.rows.push_back(std::move(row));
    }
    csv::write(path, t);
}

} // namespace trajlens
