#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trajlens/csv.hpp"
#include "trajlens/embedder.hpp"
#include "trajlens/error.hpp"
#include "trajlens/random.hpp"

namespace trajlens {

/// Exact k nearest neighbors, stored row-major: point i owns slots [i*k, (i+1)*k).
struct NeighborGraph {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::size_t> indices;
    std::vector<double> distances;

    std::span<const std::size_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
    std::span<const double> dists(std::size_t i) const { return {distances.data() + i * k, k}; }

    /// The first `k2` neighbors of every point.
    NeighborGraph truncate(std::size_t k2) const {
        if (k2 > k) {
            throw ConfigError("cannot widen a neighbor graph from " + std::to_string(k) + " to " + std::to_string(k2));
        }
        NeighborGraph g{n, k2, {}, {}};
        g.indices.reserve(n * k2);
        g.distances.reserve(n * k2);
        for (std::size_t i = 0; i < n; ++i) {
            g.indices.insert(g.indices.end(), indices.begin() + static_cast<long>(i * k), indices.begin() + static_cast<long>(i * k + k2));
            g.distances.insert(g.distances.end(), distances.begin() + static_cast<long>(i * k),
                               distances.begin() + static_cast<long>(i * k + k2));
        }
        return g;
    }
};

/// Brute-force Euclidean kNN over the rows of `x`, ties broken by index, no self edges.
inline NeighborGraph knn_graph(const Eigen::MatrixXd& x, std::size_t k) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (k == 0 || k >= n) {
        throw ConfigError("knn_graph: need 0 < k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    const Eigen::MatrixXd points = x.transpose(); // one contiguous column per point
    NeighborGraph g{n, k, std::vector<std::size_t>(n * k), std::vector<double>(n * k)};
    std::vector<std::pair<double, std::size_t>> row(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pos = 0;
        const auto pi = points.col(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row[pos++] = {(pi - points.col(static_cast<Eigen::Index>(j))).squaredNorm(), j};
            }
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<long>(k), row.end());
        for (std::size_t r = 0; r < k; ++r) {
            g.indices[i * k + r] = row[r].second;
            g.distances[i * k + r] = std::sqrt(row[r].first);
        }
    }
    return g;
}

struct SmoothKnn {
    double rho = 0.0;
    double sigma = 1.0;
    bool degenerate = false;
    double residual = 0.0; ///< |sum_j exp(-max(0, d_j - rho) / sigma) - log2(k)|
};

/**
 * Finds rho (nearest distance) and sigma such that
 * sum_j exp(-max(0, d_j - rho) / sigma) = log2(k), by bisection.
 * When the neighbors tied at rho already reach the target the equation has
 * no solution; sigma is then set to 1e3 times the mean distance.
 */
inline SmoothKnn smooth_knn(std::span<const double> distances, int max_iterations = 64, double tolerance = 1e-5) {
    if (distances.empty()) {
        throw ConfigError("smooth_knn: no distances");
    }
    const double target = std::log2(static_cast<double>(distances.size()));
    SmoothKnn out;
    out.rho = distances.front();
    auto membership_sum = [&](double sigma) {
        double s = 0.0;
        for (double d : distances) {
            s += std::exp(-std::max(0.0, d - out.rho) / sigma);
        }
        return s;
    };

    const auto at_rho = static_cast<double>(std::count_if(distances.begin(), distances.end(), [&](double d) { return d <= out.rho; }));
    if (at_rho >= target) {
        const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / static_cast<double>(distances.size());
        out.sigma = mean > 0.0 ? 1e3 * mean : 1e3;
        out.degenerate = true;
        out.residual = std::abs(membership_sum(out.sigma) - target);
        return out;
    }

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double mid = 1.0;
    for (int it = 0; it < max_iterations; ++it) {
        const double s = membership_sum(mid);
        if (std::abs(s - target) < tolerance) {
            break;
        }
        if (s > target) {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = std::isinf(hi) ? 2.0 * mid : 0.5 * (lo + hi);
        }
    }
    out.sigma = mid;
    out.residual = std::abs(membership_sum(mid) - target);
    return out;
}

struct WeightedEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    double weight = 0.0;
};

/// Symmetric sparse graph with weights in (0, 1]; each undirected edge is stored in both directions, sorted by (from, to).
struct FuzzyGraph {
    std::size_t n = 0;
    std::vector<WeightedEdge> edges;

    double weight(std::size_t i, std::size_t j) const {
        const auto it = std::lower_bound(edges.begin(), edges.end(), std::pair{i, j}, [](const WeightedEdge& e, const std::pair<std::size_t, std::size_t>& key) {
            return std::pair{e.from, e.to} < key;
        });
        return (it != edges.end() && it->from == i && it->to == j) ? it->weight : 0.0;
    }
};

struct MembershipResult {
    std::vector<WeightedEdge> directed;
    std::vector<SmoothKnn> calibration;
};

/// Directed memberships exp(-max(0, d_ij - rho_i) / sigma_i) for every kNN edge.
inline MembershipResult membership_strengths(const NeighborGraph& g) {
    MembershipResult out;
    out.directed.reserve(g.n * g.k);
    out.calibration.reserve(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto d = g.dists(i);
        const SmoothKnn s = smooth_knn(d);
        out.calibration.push_back(s);
        const auto nb = g.neighbors(i);
        for (std::size_t r = 0; r < g.k; ++r) {
            const double w = std::exp(-std::max(0.0, d[r] - s.rho) / s.sigma);
            if (w > 0.0) {
                out.directed.push_back({i, nb[r], w});
            }
        }
    }
    return out;
}

/// Probabilistic union B = A + A^T - A o A^T of directed memberships.
inline FuzzyGraph fuzzy_union(std::vector<WeightedEdge> directed, std::size_t n) {
    auto by_key = [](const WeightedEdge& a, const WeightedEdge& b) { return std::pair{a.from, a.to} < std::pair{b.from, b.to}; };
    std::sort(directed.begin(), directed.end(), by_key);
    // Collapse duplicate directed entries, keeping the largest membership.
    std::vector<WeightedEdge> a;
    for (const auto& e : directed) {
        if (e.weight < 0.0 || e.weight > 1.0) {
            throw DataError("fuzzy_union: membership outside [0, 1]");
        }
        if (!a.empty() && a.back().from == e.from && a.back().to == e.to) {
            a.back().weight = std::max(a.back().weight, e.weight);
        } else {
            a.push_back(e);
        }
    }
    auto lookup = [&](std::size_t i, std::size_t j) {
        const auto it = std::lower_bound(a.begin(), a.end(), WeightedEdge{i, j, 0.0}, by_key);
        return (it != a.end() && it->from == i && it->to == j) ? it->weight : 0.0;
    };

    FuzzyGraph g;
    g.n = n;
    g.edges.reserve(2 * a.size());
    for (const auto& e : a) {
        if (e.from == e.to) {
            continue;
        }
        const double wt = lookup(e.to, e.from);
        const double b = e.weight + wt - e.weight * wt;
        if (b > 0.0) {
            g.edges.push_back({e.from, e.to, b});
            if (wt == 0.0) {
                g.edges.push_back({e.to, e.from, b});
            }
        }
    }
    std::sort(g.edges.begin(), g.edges.end(), by_key);
    return g;
}

struct CurveFit {
    double a = 1.0;
    double b = 1.0;
    std::vector<double> trace; ///< sum of squared residuals after each accepted step, starting with the initial value
};

/**
 * Fits 1 / (1 + a x^(2b)) to the target that is 1 below `min_dist` and
 * exp(-(x - min_dist) / spread) above, on 300 evenly spaced points in
 * (0, 3 * spread], by Levenberg-Marquardt damped Gauss-Newton from (1, 1).
 */
inline CurveFit fit_curve(double min_dist, double spread = 1.0, int max_iterations = 200) {
    if (!(min_dist > 0.0) || !(spread > 0.0)) {
        throw ConfigError("fit_curve: min_dist and spread must be positive");
    }
    constexpr int kPoints = 300;
    std::vector<double> xs(kPoints);
    std::vector<double> ys(kPoints);
    for (int i = 0; i < kPoints; ++i) {
        xs[i] = 3.0 * spread * (i + 1) / kPoints;
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (int i = 0; i < kPoints; ++i) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
            s += r * r;
        }
        return s;
    };

    CurveFit fit;
    double current = sse(fit.a, fit.b);
    fit.trace.push_back(current);
    double lambda = 1e-3;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
        Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
        for (int i = 0; i < kPoints; ++i) {
            const double u = std::pow(xs[i], 2.0 * fit.b);
            const double denom = 1.0 + fit.a * u;
            const double r = 1.0 / denom - ys[i];
            const Eigen::Vector2d j{-u / (denom * denom), -fit.a * u * 2.0 * std::log(xs[i]) / (denom * denom)};
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if (jtr.norm() < 1e-14) {
            return fit;
        }
        bool accepted = false;
        for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
            Eigen::Matrix2d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal();
            const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
            const double a2 = fit.a + step(0);
            const double b2 = fit.b + step(1);
            const double trial = (a2 > 0.0 && b2 > 0.0 && step.allFinite()) ? sse(a2, b2) : std::numeric_limits<double>::infinity();
            if (trial <= current) {
                accepted = true;
                const double improvement = current - trial;
                fit.a = a2;
                fit.b = b2;
                current = trial;
                fit.trace.push_back(current);
                lambda = std::max(lambda / 10.0, 1e-12);
                if (improvement <= 1e-15 * std::max(1.0, current) || step.norm() < 1e-12) {
                    return fit;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            return fit; // no descent direction left: at a minimum to working precision
        }
    }
    throw Error("fit_curve did not converge in " + std::to_string(max_iterations) + " iterations (residual " + csv::format(current) + ")");
}

// ---------------------------------------------------------------------------
// Layout optimization

using Layout = std::vector<std::array<double, 2>>;

/// Coefficient c with attractive descent update c * (y_i - y_j); c <= 0.
inline double attractive_coefficient(double dist2, double a, double b) {
    if (dist2 <= 0.0) {
        return 0.0;
    }
    return -2.0 * a * b * std::pow(dist2, b - 1.0) / (1.0 + a * std::pow(dist2, b));
}

/// Coefficient c with repulsive descent update c * (y_i - y_j); c >= 0. `eps` guards d -> 0.
inline double repulsive_coefficient(double dist2, double a, double b, double eps = 0.001) {
    return 2.0 * b / ((eps + dist2) * (1.0 + a * std::pow(dist2, b)));
}

/// Fuzzy-set cross entropy between graph weights `w` (dense, n x n) and the layout's low-dimensional similarities.
inline double layout_objective(const Layout& y, const Eigen::MatrixXd& w, double a, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t j = i + 1; j < y.size(); ++j) {
            const double dx = y[i][0] - y[j][0];
            const double dy = y[i][1] - y[j][1];
            const double d2 = dx * dx + dy * dy;
            const double phi = 1.0 / (1.0 + a * std::pow(d2, b));
            const double wij = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            total -= wij * std::log(phi) + (1.0 - wij) * std::log(1.0 - phi);
        }
    }
    return total;
}

/// Analytic gradient of layout_objective assembled from the layout update coefficients.
inline Layout layout_gradient(const Layout& y, const Eigen::MatrixXd& w, double a, double b) {
    Layout grad(y.size(), {0.0, 0.0});
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (i == j) {
                continue;
            }
            const double dx = y[i][0] - y[j][0];
            const double dy = y[i][1] - y[j][1];
            const double d2 = dx * dx + dy * dy;
            const double wij = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            const double c = -wij * attractive_coefficient(d2, a, b) - (1.0 - wij) * repulsive_coefficient(d2, a, b, 0.0);
            grad[i][0] += c * dx;
            grad[i][1] += c * dy;
        }
    }
    return grad;
}

struct LayoutConfig {
    int epochs = 200;
    double initial_lr = 1.0;
    int negative_samples = 5;
    double a = 1.0;
    double b = 1.0;
    double clip = 4.0;
    std::uint64_t seed = 0;
    std::optional<Layout> init; ///< random in [-10, 10]^2 when unset
};

inline Layout random_layout(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Layout y(n);
    for (auto& p : y) {
        p[0] = rng.uniform(-10.0, 10.0);
        p[1] = rng.uniform(-10.0, 10.0);
    }
    return y;
}

/**
 * Projection on the two leading principal components, rescaled so the
 * largest absolute coordinate is 10, plus N(0, 1e-4) jitter. Component
 * signs are fixed so the largest-magnitude loading is positive.
 */
inline Layout pca_layout(const Eigen::MatrixXd& x, std::uint64_t seed) {
    if (x.rows() < 2 || x.cols() < 2) {
        throw DataError("pca_layout: need at least two rows and two columns");
    }
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered.transpose() * centered);
    Eigen::MatrixXd basis(x.cols(), 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(x.cols() - 1 - c);
        Eigen::Index at = 0;
        v.cwiseAbs().maxCoeff(&at);
        if (v(at) < 0.0) {
            v = -v;
        }
        basis.col(c) = v;
    }
    const Eigen::MatrixXd proj = centered * basis;
    const double scale = proj.cwiseAbs().maxCoeff();
    Rng rng(seed);
    Layout y(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (int c = 0; c < 2; ++c) {
            const double v = scale > 0.0 ? 10.0 * proj(i, c) / scale : 0.0;
            y[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = v + rng.normal(0.0, 1e-4);
        }
    }
    return y;
}

/**
 * Stochastic layout: each edge is sampled in proportion to its weight and
 * pulls its endpoints together; each sample is followed by uniform negative
 * samples that push the head away. The learning rate decays linearly to 0.
 * Single-threaded and deterministic for a given seed.
 */
inline Layout optimize_layout(const FuzzyGraph& graph, const LayoutConfig& cfg) {
    if (cfg.init && cfg.init->size() != graph.n) {
        throw ConfigError("optimize_layout: initial layout has " + std::to_string(cfg.init->size()) + " points for " + std::to_string(graph.n));
    }
    Layout y = cfg.init ? *cfg.init : random_layout(graph.n, derive_seed(cfg.seed, "init"));
    if (cfg.epochs <= 0 || graph.edges.empty() || graph.n < 2) {
        return y;
    }
    double w_max = 0.0;
    for (const auto& e : graph.edges) {
        w_max = std::max(w_max, e.weight);
    }
    std::vector<WeightedEdge> edges;
    for (const auto& e : graph.edges) {
        if (e.weight >= w_max / cfg.epochs) {
            edges.push_back(e);
        }
    }
    std::vector<double> epochs_per_sample(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        epochs_per_sample[i] = w_max / edges[i].weight;
    }
    std::vector<double> epochs_per_negative(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        epochs_per_negative[i] = epochs_per_sample[i] / cfg.negative_samples;
    }
    std::vector<double> next_sample = epochs_per_sample;
    std::vector<double> next_negative = epochs_per_negative;

    Rng rng(derive_seed(cfg.seed, "negatives"));
    auto clip = [&](double v) { return std::clamp(v, -cfg.clip, cfg.clip); };
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double alpha = cfg.initial_lr * (1.0 - static_cast<double>(epoch) / cfg.epochs);
        const auto n_epoch = static_cast<double>(epoch);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            if (next_sample[e] > n_epoch) {
                continue;
            }
            auto& cur = y[edges[e].from];
            auto& other = y[edges[e].to];
            double dx = cur[0] - other[0];
            double dy = cur[1] - other[1];
            const double coeff = attractive_coefficient(dx * dx + dy * dy, cfg.a, cfg.b);
            const double gx = clip(coeff * dx) * alpha;
            const double gy = clip(coeff * dy) * alpha;
            cur[0] += gx;
            cur[1] += gy;
            other[0] -= gx;
            other[1] -= gy;
            next_sample[e] += epochs_per_sample[e];

            const auto n_neg = static_cast<int>((n_epoch - next_negative[e]) / epochs_per_negative[e]);
            for (int p = 0; p < n_neg; ++p) {
                const std::size_t k = rng.index(graph.n);
                if (k == edges[e].from) {
                    continue;
                }
                const auto& neg = y[k];
                dx = cur[0] - neg[0];
                dy = cur[1] - neg[1];
                const double d2 = dx * dx + dy * dy;
                if (d2 > 0.0) {
                    const double rc = repulsive_coefficient(d2, cfg.a, cfg.b);
                    cur[0] += clip(rc * dx) * alpha;
                    cur[1] += clip(rc * dy) * alpha;
                } else {
                    cur[0] += cfg.clip * alpha;
                    cur[1] += cfg.clip * alpha;
                }
            }
            next_negative[e] += n_neg * epochs_per_negative[e];
        }
    }
    return y;
}

enum class LayoutInit { Random, Pca };

struct ReduceConfig {
    LayoutInit init = LayoutInit::Pca;
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    int epochs = 200;
    int negative_samples = 5;
    double initial_lr = 1.0;
    std::uint64_t seed = 0;
};

struct Reduction {
    Layout layout;
    FuzzyGraph graph;
    double a = 1.0;
    double b = 1.0;
    double max_smooth_residual = 0.0; ///< over non-degenerate points
    std::size_t degenerate_points = 0;
};

/// Full reduction from a precomputed neighbor graph (truncated to cfg.n_neighbors).
/// `init` is required for LayoutInit::Pca since the graph alone carries no coordinates.
inline Reduction reduce_from_knn(const NeighborGraph& knn, const ReduceConfig& cfg, std::optional<Layout> init = std::nullopt) {
    if (cfg.init == LayoutInit::Pca && !init) {
        throw ConfigError("reduce: PCA initialization needs the input matrix");
    }
    const NeighborGraph g = knn.k == cfg.n_neighbors ? knn : knn.truncate(cfg.n_neighbors);
    auto memberships = membership_strengths(g);
    Reduction out;
    for (const auto& s : memberships.calibration) {
        if (s.degenerate) {
            ++out.degenerate_points;
        } else {
            out.max_smooth_residual = std::max(out.max_smooth_residual, s.residual);
        }
    }
    out.graph = fuzzy_union(std::move(memberships.directed), g.n);
    const CurveFit curve = fit_curve(cfg.min_dist, cfg.spread);
    out.a = curve.a;
    out.b = curve.b;
    LayoutConfig lc;
    lc.epochs = cfg.epochs;
    lc.initial_lr = cfg.initial_lr;
    lc.negative_samples = cfg.negative_samples;
    lc.a = curve.a;
    lc.b = curve.b;
    lc.seed = cfg.seed;
    if (cfg.init == LayoutInit::Pca) {
        lc.init = std::move(init);
    }
    out.layout = optimize_layout(out.graph, lc);
    return out;
}

inline Reduction reduce(const Eigen::MatrixXd& x, const ReduceConfig& cfg = {}) {
    std::optional<Layout> init;
    if (cfg.init == LayoutInit::Pca) {
        init = pca_layout(x, derive_seed(cfg.seed, "init"));
    }
    return reduce_from_knn(knn_graph(x, cfg.n_neighbors), cfg, std::move(init));
}

inline std::string combo_tag(std::size_t n_neighbors, double min_dist) {
    return "nn" + std::to_string(n_neighbors) + "_md" + csv::format(min_dist);
}

struct SweepEntry {
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    std::string tag;
    bool primary = false;
    Layout layout;
};

/// Reduction for every (n_neighbors, min_dist) pair; the neighbor graph is computed once at the largest k.
/// The entry matching the base configuration is flagged primary.
inline std::vector<SweepEntry> sweep(const Eigen::MatrixXd& x, std::span<const std::size_t> n_neighbors, std::span<const double> min_dists,
                                     const ReduceConfig& base = {}) {
    if (n_neighbors.empty() || min_dists.empty()) {
        throw ConfigError("sweep: empty hyperparameter grid");
    }
    const std::size_t k_max = *std::max_element(n_neighbors.begin(), n_neighbors.end());
    const NeighborGraph knn = knn_graph(x, k_max);
    std::optional<Layout> init;
    if (base.init == LayoutInit::Pca) {
        init = pca_layout(x, derive_seed(base.seed, "init"));
    }
    std::vector<SweepEntry> out;
    for (std::size_t nn : n_neighbors) {
        for (double md : min_dists) {
            ReduceConfig cfg = base;
            cfg.n_neighbors = nn;
            cfg.min_dist = md;
            SweepEntry entry{nn, md, combo_tag(nn, md), nn == base.n_neighbors && md == base.min_dist, reduce_from_knn(knn, cfg, init).layout};
            out.push_back(std::move(entry));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// reduced.csv: patient_id, snapshot_index, u1, u2, combo

struct ReducedPoint {
    std::string patient_id;
    int snapshot_index = 0;
    double u1 = 0.0;
    double u2 = 0.0;
    std::string combo;
};

inline std::vector<ReducedPoint> to_points(const std::vector<SnapshotKey>& keys, const Layout& layout, const std::string& combo) {
    if (keys.size() != layout.size()) {
        throw DataError("reduced layout has " + std::to_string(layout.size()) + " points for " + std::to_string(keys.size()) + " snapshots");
    }
    std::vector<ReducedPoint> points;
    points.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        points.push_back({keys[i].patient_id, keys[i].snapshot_index, layout[i][0], layout[i][1], combo});
    }
    return points;
}

inline void write_reduced(const std::string& path, std::span<const ReducedPoint> points) {
    csv::Table table;
    table.header = {"patient_id", "snapshot_index", "u1", "u2", "combo"};
    for (const auto& p : points) {
        table.rows.push_back({p.patient_id, std::to_string(p.snapshot_index), csv::format(p.u1), csv::format(p.u2), p.combo});
    }
    csv::write(path, table);
}

inline std::vector<ReducedPoint> read_reduced(const std::string& path) {
    const csv::Table table = csv::read(path);
    const std::size_t pid = table.column("patient_id");
    const std::size_t sid = table.column("snapshot_index");
    const std::size_t u1 = table.column("u1");
    const std::size_t u2 = table.column("u2");
    const bool has_combo = table.has_column("combo");
    const std::size_t combo = has_combo ? table.column("combo") : 0;
    std::vector<ReducedPoint> points;
    for (const auto& row : table.rows) {
        ReducedPoint p{row[pid], static_cast<int>(csv::parse_long(row[sid], path)), csv::parse_double(row[u1], path),
                       csv::parse_double(row[u2], path), has_combo ? row[combo] : combo_tag(15, 0.1)};
        if (!std::isfinite(p.u1) || !std::isfinite(p.u2)) {
            throw DataError(path + ": non-finite coordinate for " + p.patient_id);
        }
        points.push_back(std::move(p));
    }
    return points;
}

} // namespace trajlens
