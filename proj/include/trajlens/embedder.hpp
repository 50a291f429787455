#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "trajlens/csv.hpp"
#include "trajlens/error.hpp"
#include "trajlens/random.hpp"
#include "trajlens/tokenizer.hpp"

namespace trajlens {

struct SnapshotKey {
    std::string patient_id;
    int snapshot_index = 0;

    friend auto operator<=>(const SnapshotKey&, const SnapshotKey&) = default;
    std::string str() const { return "(" + patient_id + ", " + std::to_string(snapshot_index) + ")"; }
};

/// One row per snapshot, one column per embedding dimension.
struct EmbeddingMatrix {
    std::vector<SnapshotKey> keys;
    Eigen::MatrixXd values;
    bool row_norm = false;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

/// Scales every row to unit Euclidean norm. A zero row is an error.
inline void normalize_rows(EmbeddingMatrix& m) {
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        const double norm = m.values.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw DataError("cannot normalize embedding row " + m.keys[static_cast<std::size_t>(i)].str());
        }
        m.values.row(i) /= norm;
    }
    m.row_norm = true;
}

inline void check_finite(const EmbeddingMatrix& m) {
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        if (!m.values.row(i).allFinite()) {
            throw DataError("non-finite value in embedding row " + m.keys[static_cast<std::size_t>(i)].str());
        }
    }
}

// ---------------------------------------------------------------------------
// Co-occurrence baseline

/// Positive PMI over the tokens that actually occur (specials other than UNK excluded).
struct PpmiMatrix {
    std::vector<int> tokens;       ///< vocabulary id of each row/column
    Eigen::MatrixXd values;        ///< symmetric, non-negative
    std::map<int, Eigen::Index> index;
};

inline bool is_content_token(int id) { return id == Vocabulary::kUnk || !Vocabulary::is_special(id); }

inline PpmiMatrix ppmi(std::span<const TokenSequence> sequences, std::size_t window = 5) {
    PpmiMatrix out;
    std::set<int> active;
    for (const auto& s : sequences) {
        for (int id : s.content()) {
            if (is_content_token(id)) {
                active.insert(id);
            }
        }
    }
    if (active.size() < 2) {
        throw DataError("co-occurrence embedding needs at least two active tokens, found " + std::to_string(active.size()));
    }
    out.tokens.assign(active.begin(), active.end());
    for (std::size_t i = 0; i < out.tokens.size(); ++i) {
        out.index[out.tokens[i]] = static_cast<Eigen::Index>(i);
    }
    const auto n = static_cast<Eigen::Index>(out.tokens.size());
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
    std::vector<Eigen::Index> row;
    for (const auto& s : sequences) {
        row.clear();
        for (int id : s.content()) {
            if (is_content_token(id)) {
                row.push_back(out.index[id]);
            }
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            const std::size_t hi = std::min(row.size(), i + window + 1);
            for (std::size_t j = i + 1; j < hi; ++j) {
                counts(row[i], row[j]) += 1.0;
                counts(row[j], row[i]) += 1.0;
            }
        }
    }
    const Eigen::VectorXd marginal = counts.rowwise().sum();
    const double total = marginal.sum();
    out.values = Eigen::MatrixXd::Zero(n, n);
    if (total <= 0.0) {
        return out;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = counts(i, j);
            if (c > 0.0) {
                out.values(i, j) = std::max(0.0, std::log(c * total / (marginal(i) * marginal(j))));
            }
        }
    }
    return out;
}

struct FactorizationConfig {
    std::size_t rank = 200;
    int power_iterations = 20;
    std::size_t oversampling = 10;
    std::uint64_t seed = 0;
};

/**
 * Rank-`rank` factors of a symmetric matrix: rows are U_r * sqrt(|lambda_r|),
 * ordered by |lambda| descending. Uses randomized subspace iteration when the
 * sketch is smaller than the matrix, a dense eigensolver otherwise. Columns
 * beyond the matrix order are zero.
 */
inline Eigen::MatrixXd truncated_factors(const Eigen::MatrixXd& m, const FactorizationConfig& cfg) {
    const Eigen::Index n = m.rows();
    const auto rank = static_cast<Eigen::Index>(cfg.rank);
    const auto sketch = static_cast<Eigen::Index>(cfg.rank + cfg.oversampling);

    Eigen::MatrixXd basis;
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    if (sketch >= n) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
        eigenvalues = solver.eigenvalues();
        eigenvectors = solver.eigenvectors();
    } else {
        Rng rng(cfg.seed);
        Eigen::MatrixXd omega(n, sketch);
        for (Eigen::Index j = 0; j < sketch; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                omega(i, j) = rng.normal();
            }
        }
        auto orthonormalize = [](const Eigen::MatrixXd& y) {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
            return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols()));
        };
        basis = orthonormalize(m * omega);
        for (int it = 0; it < cfg.power_iterations; ++it) {
            basis = orthonormalize(m * basis);
        }
        const Eigen::MatrixXd projected = basis.transpose() * m * basis;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (projected + projected.transpose()));
        eigenvalues = solver.eigenvalues();
        eigenvectors = basis * solver.eigenvectors();
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(eigenvalues.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<Eigen::Index>(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return std::abs(eigenvalues(a)) > std::abs(eigenvalues(b)); });

    Eigen::MatrixXd factors = Eigen::MatrixXd::Zero(n, rank);
    const Eigen::Index keep = std::min<Eigen::Index>(rank, static_cast<Eigen::Index>(order.size()));
    for (Eigen::Index c = 0; c < keep; ++c) {
        const Eigen::Index src = order[static_cast<std::size_t>(c)];
        Eigen::VectorXd v = eigenvectors.col(src);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0.0) {
            v = -v;
        }
        factors.col(c) = v * std::sqrt(std::abs(eigenvalues(src)));
    }
    return factors;
}

struct BaselineConfig {
    std::size_t dim = 200;
    std::size_t window = 5;
    int power_iterations = 20;
    std::size_t oversampling = 10;
    std::uint64_t seed = 0;
};

/**
 * Built-in stand-in for a trained encoder: PPMI over windowed token
 * co-occurrence, truncated factorization into token vectors, then the mean
 * of each sequence's content-token vectors, L2-normalized.
 */
inline EmbeddingMatrix embed_baseline(std::span<const TokenSequence> sequences, std::vector<SnapshotKey> keys,
                                      const BaselineConfig& cfg = {}) {
    if (keys.size() != sequences.size()) {
        throw ConfigError("embed_baseline: one key per sequence required");
    }
    const PpmiMatrix pm = ppmi(sequences, cfg.window);
    const Eigen::MatrixXd token_vectors =
        truncated_factors(pm.values, FactorizationConfig{cfg.dim, cfg.power_iterations, cfg.oversampling, cfg.seed});

    EmbeddingMatrix out;
    out.keys = std::move(keys);
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sequences.size()), static_cast<Eigen::Index>(cfg.dim));
    for (std::size_t r = 0; r < sequences.size(); ++r) {
        std::size_t count = 0;
        for (int id : sequences[r].content()) {
            if (is_content_token(id)) {
                out.values.row(static_cast<Eigen::Index>(r)) += token_vectors.row(pm.index.at(id));
                ++count;
            }
        }
        if (count == 0) {
            throw DataError("snapshot " + out.keys[r].str() + " has no content tokens");
        }
        out.values.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(count);
    }
    normalize_rows(out);
    return out;
}

// ---------------------------------------------------------------------------
// CSV exchange format: patient_id, snapshot_index, e_0 .. e_{d-1}

inline void write_embeddings(const std::string& path, const EmbeddingMatrix& m) {
    csv::Table table;
    table.header = {"patient_id", "snapshot_index"};
    for (std::size_t c = 0; c < m.dim(); ++c) {
        table.header.push_back("e_" + std::to_string(c));
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::vector<std::string> row{m.keys[r].patient_id, std::to_string(m.keys[r].snapshot_index)};
        for (std::size_t c = 0; c < m.dim(); ++c) {
            row.push_back(csv::format(m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
        }
        table.rows.push_back(std::move(row));
    }
    csv::write(path, table);
}

/**
 * Reads externally computed embeddings and aligns them to `expected`.
 * Every expected key must be present exactly once; `expected_dim` of 0
 * accepts any width.
 */
inline EmbeddingMatrix ingest_embeddings(const std::string& path, const std::vector<SnapshotKey>& expected, bool normalize,
                                         std::size_t expected_dim = 0) {
    const csv::Table table = csv::read(path);
    if (table.header.size() < 3 || table.header[0] != "patient_id" || table.header[1] != "snapshot_index") {
        throw DataError(path + ": header must start with patient_id,snapshot_index,e_0");
    }
    const std::size_t dim = table.header.size() - 2;
    for (std::size_t c = 0; c < dim; ++c) {
        if (table.header[c + 2] != "e_" + std::to_string(c)) {
            throw DataError(path + ": column " + std::to_string(c + 2) + " should be e_" + std::to_string(c));
        }
    }
    if (expected_dim != 0 && dim != expected_dim) {
        throw DataError(path + ": embedding dimension " + std::to_string(dim) + " does not match expected " +
                        std::to_string(expected_dim));
    }
    std::map<SnapshotKey, std::size_t> position;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        position[expected[i]] = i;
    }

    EmbeddingMatrix out;
    out.keys = expected;
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(expected.size()), static_cast<Eigen::Index>(dim));
    std::vector<bool> seen(expected.size(), false);
    for (const auto& row : table.rows) {
        const SnapshotKey key{row[0], static_cast<int>(csv::parse_long(row[1], path))};
        const auto it = position.find(key);
        if (it == position.end()) {
            throw DataError(path + ": row " + key.str() + " does not match any snapshot");
        }
        if (seen[it->second]) {
            throw DataError(path + ": duplicate row " + key.str());
        }
        seen[it->second] = true;
        for (std::size_t c = 0; c < dim; ++c) {
            const double v = csv::parse_double(row[c + 2], path);
            if (!std::isfinite(v)) {
                throw DataError(path + ": non-finite value in row " + key.str());
            }
            out.values(static_cast<Eigen::Index>(it->second), static_cast<Eigen::Index>(c)) = v;
        }
    }
    std::string missing;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (!seen[i]) {
            missing += (missing.empty() ? "" : ", ") + expected[i].str();
        }
    }
    if (!missing.empty()) {
        throw DataError(path + ": missing embedding rows " + missing);
    }
    if (normalize) {
        normalize_rows(out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear softmax classifier

/// Row-wise softmax, shifted by the row maximum for stability.
inline Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

struct ClassifierConfig {
    int epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 1e-2;
    double weight_decay = 0.01;
    double warmup_fraction = 0.25;
    int checks_per_epoch = 4;
    int patience = 8;
    double init_scale = 0.01;
    std::uint64_t seed = 0;
};

struct ClassifierModel {
    Eigen::MatrixXd weights; ///< d x 2
    Eigen::RowVector2d bias = Eigen::RowVector2d::Zero();
    ClassifierConfig config;

    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const { return (x * weights).rowwise() + bias; }
    Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const { return softmax(logits(x)); }

    nlohmann::json to_json() const {
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index i = 0; i < weights.rows(); ++i) {
            w.push_back({weights(i, 0), weights(i, 1)});
        }
        return {{"weights", w},
                {"bias", {bias(0), bias(1)}},
                {"config",
                 {{"epochs", config.epochs},
                  {"batch_size", config.batch_size},
                  {"learning_rate", config.learning_rate},
                  {"weight_decay", config.weight_decay},
                  {"warmup_fraction", config.warmup_fraction},
                  {"checks_per_epoch", config.checks_per_epoch},
                  {"patience", config.patience},
                  {"seed", config.seed}}}};
    }

    static ClassifierModel from_json(const nlohmann::json& j) {
        ClassifierModel m;
        const auto& w = j.at("weights");
        m.weights.resize(static_cast<Eigen::Index>(w.size()), 2);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m.weights(static_cast<Eigen::Index>(i), 0) = w[i].at(0).get<double>();
            m.weights(static_cast<Eigen::Index>(i), 1) = w[i].at(1).get<double>();
        }
        m.bias << j.at("bias").at(0).get<double>(), j.at("bias").at(1).get<double>();
        const auto& c = j.at("config");
        m.config.epochs = c.value("epochs", m.config.epochs);
        m.config.batch_size = c.value("batch_size", m.config.batch_size);
        m.config.learning_rate = c.value("learning_rate", m.config.learning_rate);
        m.config.weight_decay = c.value("weight_decay", m.config.weight_decay);
        m.config.warmup_fraction = c.value("warmup_fraction", m.config.warmup_fraction);
        m.config.checks_per_epoch = c.value("checks_per_epoch", m.config.checks_per_epoch);
        m.config.patience = c.value("patience", m.config.patience);
        m.config.seed = c.value("seed", m.config.seed);
        return m;
    }
};

inline ClassifierModel initial_classifier(std::size_t dim, const ClassifierConfig& cfg) {
    ClassifierModel m;
    m.config = cfg;
    m.weights.resize(static_cast<Eigen::Index>(dim), 2);
    Rng rng(cfg.seed);
    for (Eigen::Index i = 0; i < m.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            m.weights(i, j) = cfg.init_scale * rng.normal();
        }
    }
    return m;
}

struct LossGradient {
    double loss = 0.0;
    Eigen::MatrixXd weights;
    Eigen::RowVector2d bias;
};

/// Mean cross-entropy of softmax(xW + b) plus 0.5 * l2 * ||W||^2, with its gradient.
inline LossGradient loss_and_gradient(const ClassifierModel& m, const Eigen::MatrixXd& x, std::span<const int> labels, double l2 = 0.0) {
    const Eigen::MatrixXd p = m.probabilities(x);
    const auto n = static_cast<double>(x.rows());
    Eigen::MatrixXd delta = p;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        loss -= std::log(p(i, y));
        delta(i, y) -= 1.0;
    }
    LossGradient g;
    g.loss = loss / n + 0.5 * l2 * m.weights.squaredNorm();
    g.weights = x.transpose() * delta / n + l2 * m.weights;
    g.bias = delta.colwise().sum() / n;
    return g;
}

struct BinaryMetrics {
    double recall = 0.0;
    double precision = 0.0;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    std::size_t true_negative = 0;
};

/// Recall and precision from predicted and actual 0/1 labels. Precision is 0 when nothing is predicted positive.
inline BinaryMetrics binary_metrics(std::span<const int> predicted, std::span<const int> actual) {
    if (predicted.size() != actual.size()) {
        throw DataError("binary_metrics: length mismatch");
    }
    BinaryMetrics m;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 1) {
            (predicted[i] == 1 ? m.true_positive : m.false_negative)++;
        } else {
            (predicted[i] == 1 ? m.false_positive : m.true_negative)++;
        }
    }
    if (m.true_positive + m.false_negative == 0) {
        throw DegenerateInput("recall is undefined without positive examples");
    }
    m.recall = static_cast<double>(m.true_positive) / static_cast<double>(m.true_positive + m.false_negative);
    const std::size_t predicted_positive = m.true_positive + m.false_positive;
    m.precision = predicted_positive == 0 ? 0.0 : static_cast<double>(m.true_positive) / static_cast<double>(predicted_positive);
    return m;
}

inline std::vector<int> predict(const ClassifierModel& m, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd p = m.probabilities(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = p(i, 1) >= 0.5 ? 1 : 0;
    }
    return out;
}

/// Recall and precision at P(y=1) >= 0.5.
inline BinaryMetrics evaluate(const ClassifierModel& m, const Eigen::MatrixXd& x, std::span<const int> labels) {
    const auto pred = predict(m, x);
    return binary_metrics(pred, labels);
}

/**
 * Mini-batch AdamW with linear warm-up then linear decay. When a
 * validation set is given, recall + precision is checked `checks_per_epoch`
 * times per epoch and training stops after `patience` checks without
 * improvement, returning the best parameters seen.
 */
inline ClassifierModel train_classifier(const Eigen::MatrixXd& x, std::span<const int> labels, const Eigen::MatrixXd& x_val,
                                        std::span<const int> labels_val, const ClassifierConfig& cfg = {}) {
    if (static_cast<std::size_t>(x.rows()) != labels.size() || static_cast<std::size_t>(x_val.rows()) != labels_val.size()) {
        throw DataError("train_classifier: label count does not match rows");
    }
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0 || positives == static_cast<long>(labels.size())) {
        throw DataError("train_classifier: training fold contains a single class");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) {
            throw DataError("train_classifier: labels must be 0 or 1");
        }
    }

    ClassifierModel model = initial_classifier(static_cast<std::size_t>(x.cols()), cfg);
    if (cfg.epochs <= 0) {
        return model;
    }

    const std::size_t n = labels.size();
    const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
    const auto warmup_steps = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
    const std::size_t check_every = std::max<std::size_t>(1, steps_per_epoch / static_cast<std::size_t>(std::max(1, cfg.checks_per_epoch)));
    const bool early_stopping = x_val.rows() > 0 && std::count(labels_val.begin(), labels_val.end(), 1) > 0;

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    Eigen::MatrixXd m_w = Eigen::MatrixXd::Zero(model.weights.rows(), 2);
    Eigen::MatrixXd v_w = m_w;
    Eigen::RowVector2d m_b = Eigen::RowVector2d::Zero();
    Eigen::RowVector2d v_b = m_b;

    ClassifierModel best = model;
    double best_score = -1.0;
    int stale = 0;

    Rng rng(derive_seed(cfg.seed, "batches"));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::size_t step = 0;
    Eigen::MatrixXd xb;
    std::vector<int> yb;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(n, start + batch);
            xb.resize(static_cast<Eigen::Index>(stop - start), x.cols());
            yb.resize(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                xb.row(static_cast<Eigen::Index>(i - start)) = x.row(static_cast<Eigen::Index>(order[i]));
                yb[i - start] = labels[order[i]];
            }
            const LossGradient g = loss_and_gradient(model, xb, yb);
            ++step;
            double lr = cfg.learning_rate;
            if (step <= warmup_steps && warmup_steps > 0) {
                lr *= static_cast<double>(step) / static_cast<double>(warmup_steps);
            } else if (total_steps > warmup_steps) {
                lr *= static_cast<double>(total_steps - step + 1) / static_cast<double>(total_steps - warmup_steps);
            }
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            m_w = beta1 * m_w + (1.0 - beta1) * g.weights;
            v_w = beta2 * v_w + (1.0 - beta2) * g.weights.cwiseProduct(g.weights);
            m_b = beta1 * m_b + (1.0 - beta1) * g.bias;
            v_b = beta2 * v_b + (1.0 - beta2) * g.bias.cwiseProduct(g.bias);
            model.weights *= 1.0 - lr * cfg.weight_decay;
            model.weights -= lr * ((m_w / c1).array() / ((v_w / c2).array().sqrt() + eps)).matrix();
            model.bias -= lr * ((m_b / c1).array() / ((v_b / c2).array().sqrt() + eps)).matrix();

            if (early_stopping && step % check_every == 0) {
                const BinaryMetrics val = evaluate(model, x_val, labels_val);
                const double score = val.recall + val.precision;
                if (score > best_score) {
                    best_score = score;
                    best = model;
                    stale = 0;
                } else if (++stale >= cfg.patience) {
                    return best;
                }
            }
        }
    }
    if (early_stopping) {
        const BinaryMetrics val = evaluate(model, x_val, labels_val);
        if (val.recall + val.precision > best_score) {
            best = model;
        }
        return best;
    }
    return model;
}

} // namespace trajlens
