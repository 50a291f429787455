#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trajlens/embedder.hpp"
#include "trajlens/random.hpp"

using namespace trajlens;

namespace {

TokenSequence seq_of(std::vector<int> content, std::size_t max_len = 16) {
    TokenSequence s;
    s.ids.push_back(Vocabulary::kCls);
    s.ids.insert(s.ids.end(), content.begin(), content.end());
    s.ids.push_back(Vocabulary::kSep);
    s.length = s.ids.size();
    s.ids.resize(max_len, Vocabulary::kPad);
    return s;
}

std::vector<SnapshotKey> keys_for(std::size_t n) {
    std::vector<SnapshotKey> k;
    for (std::size_t i = 0; i < n; ++i) {
        k.push_back({"p" + std::to_string(i / 3), static_cast<int>(i % 3)});
    }
    return k;
}

// Two Gaussian blobs separated along a random direction with a wide margin.
void separable(std::size_t n, std::size_t d, std::uint64_t seed, Eigen::MatrixXd& x, std::vector<int>& y) {
    Rng rng(seed);
    Eigen::VectorXd dir(static_cast<Eigen::Index>(d));
    for (auto& v : dir) {
        v = rng.normal();
    }
    dir.normalize();
    x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.uniform() < 0.4 ? 1 : 0;
        for (std::size_t j = 0; j < d; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.3 * rng.normal();
        }
        x.row(static_cast<Eigen::Index>(i)) += (y[i] ? 1.0 : -1.0) * dir.transpose();
    }
}

} // namespace

TEST(Ppmi, MatchesHandComputedCounts) {
    // Sequence [5 6 7] with window 1: pairs (5,6), (6,7), both directions.
    const std::vector<TokenSequence> seqs{seq_of({5, 6, 7})};
    const PpmiMatrix pm = ppmi(seqs, 1);
    ASSERT_EQ(pm.tokens, (std::vector<int>{5, 6, 7}));
    // counts: c56=c65=1, c67=c76=1; marginals m5=1, m6=2, m7=1; total 4.
    EXPECT_NEAR(pm.values(0, 1), std::log(1.0 * 4 / (1 * 2)), 1e-12);
    EXPECT_NEAR(pm.values(1, 2), std::log(1.0 * 4 / (2 * 1)), 1e-12);
    EXPECT_EQ(pm.values(0, 2), 0.0);
    EXPECT_EQ(pm.values(0, 0), 0.0);
}

TEST(Ppmi, WindowWidensContext) {
    const std::vector<TokenSequence> seqs{seq_of({5, 6, 7})};
    EXPECT_EQ(ppmi(seqs, 1).values(0, 2), 0.0);
    // window 2: every pair co-occurs once; marginals 2 each, total 6.
    EXPECT_NEAR(ppmi(seqs, 2).values(0, 2), std::log(1.5), 1e-12);
}

TEST(Ppmi, SymmetricNonNegativeIgnoresSpecials) {
    Rng rng(4);
    std::vector<TokenSequence> seqs;
    for (int s = 0; s < 40; ++s) {
        std::vector<int> c;
        for (int i = 0; i < 10; ++i) {
            c.push_back(static_cast<int>(Vocabulary::kNumSpecials + rng.index(25)));
        }
        c.push_back(Vocabulary::kMask);
        seqs.push_back(seq_of(c, 20));
    }
    const PpmiMatrix pm = ppmi(seqs, 5);
    EXPECT_EQ(pm.index.count(Vocabulary::kMask), 0u);
    EXPECT_TRUE(pm.values.isApprox(pm.values.transpose(), 1e-14));
    EXPECT_GE(pm.values.minCoeff(), 0.0);
}

TEST(Ppmi, NeedsTwoTokens) {
    const std::vector<TokenSequence> seqs{seq_of({7, 7})};
    EXPECT_THROW(ppmi(seqs, 5), DataError);
}

TEST(TruncatedFactors, DenseAndRandomizedPathsRecoverTopSpectrum) {
    Rng rng(12);
    const Eigen::Index n = 60;
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            g(i, j) = rng.normal();
        }
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::VectorXd lambda(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lambda(i) = 100.0 * std::pow(0.5, static_cast<double>(i));
    }
    const Eigen::MatrixXd m = q * lambda.asDiagonal() * q.transpose();
    const Eigen::Index r = 5;
    const Eigen::MatrixXd best = q.leftCols(r) * lambda.head(r).asDiagonal() * q.leftCols(r).transpose();

    const Eigen::MatrixXd randomized = truncated_factors(m, {static_cast<std::size_t>(r), 20, 10, 3});
    EXPECT_LT((randomized * randomized.transpose() - best).norm(), 1e-8);
    const Eigen::MatrixXd dense = truncated_factors(m, {static_cast<std::size_t>(r), 20, 100, 3});
    EXPECT_LT((dense * dense.transpose() - best).norm(), 1e-8);
    for (Eigen::Index c = 0; c < r; ++c) {
        EXPECT_NEAR(dense.col(c).squaredNorm(), lambda(c), 1e-8);
    }
}

TEST(TruncatedFactors, PadsColumnsBeyondOrder) {
    const Eigen::Matrix3d m = Eigen::Vector3d(3, 2, 1).asDiagonal();
    const Eigen::MatrixXd f = truncated_factors(m, {5, 10, 2, 0});
    ASSERT_EQ(f.cols(), 5);
    EXPECT_EQ(f.col(3).norm(), 0.0);
    EXPECT_EQ(f.col(4).norm(), 0.0);
    EXPECT_NEAR(f(0, 0), std::sqrt(3.0), 1e-12);
}

TEST(EmbedBaseline, UnitRowsFiniteDeterministic) {
    Rng rng(2);
    std::vector<TokenSequence> seqs;
    for (int s = 0; s < 30; ++s) {
        std::vector<int> c;
        const std::size_t len = 2 + rng.index(10);
        for (std::size_t i = 0; i < len; ++i) {
            c.push_back(static_cast<int>(Vocabulary::kNumSpecials + rng.index(40)));
        }
        seqs.push_back(seq_of(c, 16));
    }
    BaselineConfig cfg;
    cfg.dim = 8;
    cfg.seed = 5;
    const auto a = embed_baseline(seqs, keys_for(seqs.size()), cfg);
    const auto b = embed_baseline(seqs, keys_for(seqs.size()), cfg);
    ASSERT_EQ(a.rows(), 30u);
    ASSERT_EQ(a.dim(), 8u);
    EXPECT_TRUE(a.row_norm);
    EXPECT_EQ(a.values, b.values);
    for (Eigen::Index i = 0; i < a.values.rows(); ++i) {
        EXPECT_TRUE(a.values.row(i).allFinite());
        EXPECT_NEAR(a.values.row(i).norm(), 1.0, 1e-9);
    }
}

TEST(EmbedBaseline, InputErrors) {
    const std::vector<TokenSequence> seqs{seq_of({5, 6}), seq_of({})};
    EXPECT_THROW(embed_baseline(seqs, keys_for(1)), ConfigError);
    BaselineConfig cfg;
    cfg.dim = 2;
    EXPECT_THROW(embed_baseline(seqs, keys_for(2), cfg), DataError);
}

TEST(EmbeddingCsv, RoundTripAndAlignment) {
    const std::string dir = testutil::scratch_dir();
    EmbeddingMatrix m;
    m.keys = keys_for(4);
    m.values = Eigen::MatrixXd::Random(4, 3);
    write_embeddings(dir + "/e.csv", m);
    std::vector<SnapshotKey> reversed(m.keys.rbegin(), m.keys.rend());
    const auto back = ingest_embeddings(dir + "/e.csv", reversed, false);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(back.values.row(static_cast<Eigen::Index>(i)), m.values.row(static_cast<Eigen::Index>(3 - i)));
    }
    const auto normed = ingest_embeddings(dir + "/e.csv", m.keys, true, 3);
    EXPECT_NEAR(normed.values.row(2).norm(), 1.0, 1e-12);
    EXPECT_THROW(ingest_embeddings(dir + "/e.csv", m.keys, false, 4), DataError);
}

TEST(EmbeddingCsv, RejectsMalformedFiles) {
    const std::string dir = testutil::scratch_dir();
    const std::vector<SnapshotKey> keys{{"a", 0}, {"a", 1}};
    testutil::write_file(dir + "/missing.csv", "patient_id,snapshot_index,e_0\na,0,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/missing.csv", keys, false), DataError);
    testutil::write_file(dir + "/dup.csv", "patient_id,snapshot_index,e_0\na,0,1.0\na,0,2.0\na,1,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/dup.csv", keys, false), DataError);
    testutil::write_file(dir + "/extra.csv", "patient_id,snapshot_index,e_0\na,0,1.0\na,1,1.0\nb,0,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/extra.csv", keys, false), DataError);
    testutil::write_file(dir + "/header.csv", "id,snapshot_index,e_0\na,0,1.0\na,1,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/header.csv", keys, false), DataError);
    testutil::write_file(dir + "/nan.csv", "patient_id,snapshot_index,e_0\na,0,nan\na,1,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/nan.csv", keys, false), DataError);
    testutil::write_file(dir + "/zero.csv", "patient_id,snapshot_index,e_0\na,0,0\na,1,1.0\n");
    EXPECT_THROW(ingest_embeddings(dir + "/zero.csv", keys, true), DataError);
    EXPECT_NO_THROW(ingest_embeddings(dir + "/zero.csv", keys, false));
}

TEST(Softmax, RowsSumToOne) {
    Rng rng(1);
    Eigen::MatrixXd logits(200, 2);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        logits(i, 0) = 50.0 * rng.normal();
        logits(i, 1) = 50.0 * rng.normal();
    }
    logits(0, 0) = 800.0;
    const Eigen::MatrixXd p = softmax(logits);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(p.row(i).minCoeff(), 0.0);
    }
    const Eigen::MatrixXd two = softmax(Eigen::MatrixXd::Constant(1, 2, 0.0));
    EXPECT_DOUBLE_EQ(two(0, 0), 0.5);
}

TEST(Classifier, GradientMatchesFiniteDifferences) {
    Rng rng(6);
    Eigen::MatrixXd x(12, 4);
    std::vector<int> y(12);
    for (Eigen::Index i = 0; i < 12; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            x(i, j) = rng.normal();
        }
        y[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(2));
    }
    ClassifierConfig cfg;
    cfg.init_scale = 0.5;
    cfg.seed = 3;
    ClassifierModel m = initial_classifier(4, cfg);
    m.bias << 0.2, -0.1;
    const double l2 = 0.3;
    const LossGradient g = loss_and_gradient(m, x, y, l2);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
            ClassifierModel plus = m;
            ClassifierModel minus = m;
            plus.weights(i, j) += h;
            minus.weights(i, j) -= h;
            const double fd = (loss_and_gradient(plus, x, y, l2).loss - loss_and_gradient(minus, x, y, l2).loss) / (2 * h);
            EXPECT_LE(std::abs(fd - g.weights(i, j)), 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
    for (Eigen::Index j = 0; j < 2; ++j) {
        ClassifierModel plus = m;
        ClassifierModel minus = m;
        plus.bias(j) += h;
        minus.bias(j) -= h;
        const double fd = (loss_and_gradient(plus, x, y, l2).loss - loss_and_gradient(minus, x, y, l2).loss) / (2 * h);
        EXPECT_LE(std::abs(fd - g.bias(j)), 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Classifier, LearnsLinearlySeparableData) {
    Eigen::MatrixXd xt, xv, xs;
    std::vector<int> yt, yv, ys;
    separable(600, 20, 1, xt, yt);
    separable(200, 20, 1, xv, yv);
    separable(200, 20, 1, xs, ys);
    ClassifierConfig cfg;
    cfg.seed = 9;
    const ClassifierModel m = train_classifier(xt, yt, xv, yv, cfg);
    const BinaryMetrics bm = evaluate(m, xs, ys);
    EXPECT_GE(bm.recall, 0.95);
    EXPECT_GE(bm.precision, 0.95);
}

TEST(Classifier, RejectsSingleClassAndBadLabels) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 2);
    const std::vector<int> ones{1, 1, 1, 1};
    EXPECT_THROW(train_classifier(x, ones, x, ones), DataError);
    const std::vector<int> bad{0, 1, 2, 0};
    EXPECT_THROW(train_classifier(x, bad, x, bad), DataError);
    const std::vector<int> short_labels{0, 1};
    EXPECT_THROW(train_classifier(x, short_labels, x, short_labels), DataError);
}

TEST(Classifier, JsonRoundTrip) {
    ClassifierConfig cfg;
    cfg.seed = 4;
    const ClassifierModel m = initial_classifier(5, cfg);
    const ClassifierModel back = ClassifierModel::from_json(m.to_json());
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.bias, m.bias);
    EXPECT_EQ(back.config.seed, 4u);
}

TEST(BinaryMetrics, CountsAndEdgeCases) {
    const std::vector<int> pred{1, 1, 0, 0, 1};
    const std::vector<int> actual{1, 0, 1, 0, 1};
    const auto m = binary_metrics(pred, actual);
    EXPECT_EQ(m.true_positive, 2u);
    EXPECT_EQ(m.false_positive, 1u);
    EXPECT_EQ(m.false_negative, 1u);
    EXPECT_EQ(m.true_negative, 1u);
    EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
    const std::vector<int> none{0, 0};
    const std::vector<int> pos{1, 0};
    EXPECT_EQ(binary_metrics(none, pos).precision, 0.0);
    EXPECT_THROW(binary_metrics(none, none), DegenerateInput);
    EXPECT_THROW(binary_metrics(pred, pos), DataError);
}
