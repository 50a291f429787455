#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trajlens/random.hpp"
#include "trajlens/trajectory.hpp"

using namespace trajlens;

namespace {

Series random_series(Rng& rng, std::size_t len) {
    Series s(len);
    for (auto& p : s) {
        p = {rng.uniform(-5, 5), rng.uniform(-5, 5)};
    }
    return s;
}

double brute_force_dtw(const Series& a, const Series& b) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += std::hypot(a[i][0] - b[j][0], a[i][1] - b[j][1]);
        if (i + 1 == a.size() && j + 1 == b.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < a.size()) {
            walk(i + 1, j, acc);
        }
        if (j + 1 < b.size()) {
            walk(i, j + 1, acc);
        }
        if (i + 1 < a.size() && j + 1 < b.size()) {
            walk(i + 1, j + 1, acc);
        }
    };
    walk(0, 0, 0.0);
    return best;
}

double pair_counting_ari(const std::vector<int>& a, const std::vector<int>& b) {
    // Rand-index pair counts over all unordered pairs.
    double both = 0, only_a = 0, only_b = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            both += sa && sb;
            only_a += sa && !sb;
            only_b += !sa && sb;
            total += 1;
        }
    }
    const double pairs_a = both + only_a;
    const double pairs_b = both + only_b;
    const double expected = pairs_a * pairs_b / total;
    const double max_index = 0.5 * (pairs_a + pairs_b);
    return (both - expected) / (max_index - expected);
}

std::vector<Series> planted_series(std::size_t per_cluster, double noise, std::uint64_t seed, std::vector<int>& truth) {
    const std::vector<Series> shapes{
        {{0, 0}, {2, 0}, {4, 0}, {6, 0}, {8, 0}},
        {{0, 0}, {0, 2}, {0, 4}, {0, 6}, {0, 8}},
        {{0, 0}, {-2, 0}, {-4, 0}, {-6, 0}, {-8, 0}},
        {{0, 0}, {0, -2}, {0, -4}, {0, -6}, {0, -8}},
    };
    Rng rng(seed);
    std::vector<Series> out;
    truth.clear();
    for (std::size_t c = 0; c < shapes.size(); ++c) {
        for (std::size_t i = 0; i < per_cluster; ++i) {
            Series s = shapes[c];
            for (auto& p : s) {
                p[0] += noise * rng.normal();
                p[1] += noise * rng.normal();
            }
            out.push_back(std::move(s));
            truth.push_back(static_cast<int>(c));
        }
    }
    return out;
}

} // namespace

TEST(BuildTrajectories, ExclusionAndDuplicateAveraging) {
    const std::vector<TrajectoryInput> in{
        {"short", 0, -1.0, 0, 0}, {"short", 1, 1.0, 0, 0},
        {"dup", -1, 0.0, 1, 1},   {"dup", -1, 0.0, 3, 3}, {"dup", -1, -2.0, 0, 0}, {"dup", -1, 4.0, 0, 0},
    };
    const auto b = build_trajectories(in);
    EXPECT_EQ(b.excluded, (std::vector<std::string>{"short"}));
    ASSERT_EQ(b.trajectories.size(), 1u);
    const auto& s = b.trajectories[0].samples;
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[1].t, 0.0);
    EXPECT_EQ(s[1].u1, 2.0);
    EXPECT_EQ(s[1].u2, 2.0);
}

TEST(BuildTrajectories, WindowPiecesMergeIntoOneSample) {
    const std::vector<TrajectoryInput> in{
        {"p", 0, -4.0, 0, 0}, {"p", 0, -3.0, 2, 2}, {"p", 1, 1.0, 1, 1}, {"p", 2, 6.0, 1, 1},
    };
    const auto merged = build_trajectories(in);
    ASSERT_EQ(merged.trajectories.size(), 1u);
    EXPECT_EQ(merged.trajectories[0].samples.front().t, -3.5);
    EXPECT_EQ(merged.trajectories[0].samples.front().u1, 1.0);
    EXPECT_EQ(build_trajectories(in, 3, false).trajectories[0].samples.size(), 4u);
    const std::vector<TrajectoryInput> bad{{"p", 0, std::nan(""), 0, 0}};
    EXPECT_THROW(build_trajectories(bad), DataError);
}

TEST(BuildTrajectories, ConservationAndOrdering) {
    Rng rng(3);
    std::vector<TrajectoryInput> in;
    std::set<std::string> ids;
    for (int p = 0; p < 200; ++p) {
        const std::string id = "p" + std::to_string(p);
        ids.insert(id);
        for (std::size_t s = 0; s < 1 + rng.index(6); ++s) {
            in.push_back({id, -1, static_cast<double>(rng.index(8)), rng.normal(), rng.normal()});
        }
    }
    const auto b = build_trajectories(in);
    EXPECT_EQ(b.excluded.size() + b.trajectories.size(), ids.size());
    for (const auto& tr : b.trajectories) {
        ASSERT_GE(tr.samples.size(), 3u);
        for (std::size_t i = 1; i < tr.samples.size(); ++i) {
            ASSERT_LT(tr.samples[i - 1].t, tr.samples[i].t);
        }
    }
}

TEST(Interpolate, MidpointAndNoExtrapolation) {
    const Trajectory tr{"p", {{-10, 0, 0}, {0, 10, 1}, {10, 20, 2}}};
    const auto a = interpolate(tr, default_grid());
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(a->grid, (std::vector<double>{-5, 0, 5, 10}));
    EXPECT_DOUBLE_EQ(a->values[0][0], 5.0);
    EXPECT_DOUBLE_EQ(a->values[1][0], 10.0);
    const Trajectory late{"q", {{-6, 0, 0}, {3, 1, 1}, {12, 2, 2}}};
    const auto b = interpolate(late, default_grid());
    ASSERT_TRUE(b.has_value());
    EXPECT_EQ(b->grid.back(), 10.0);
    const Trajectory narrow{"r", {{-1, 0, 0}, {1, 1, 1}, {6, 2, 2}}};
    EXPECT_FALSE(interpolate(narrow, default_grid()).has_value());
    EXPECT_TRUE(interpolate(narrow, default_grid(), 2).has_value());
}

TEST(Interpolate, RecoversAffineTrajectories) {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const double a1 = rng.normal(), b1 = rng.normal(), a2 = rng.normal(), b2 = rng.normal();
        Trajectory tr{"p", {}};
        double t = rng.uniform(-12, -6);
        while (t < 18) {
            tr.samples.push_back({t, a1 + b1 * t, a2 + b2 * t});
            t += rng.uniform(0.3, 6);
        }
        const auto out = interpolate(tr, default_grid(), 1);
        if (!out) {
            continue;
        }
        for (std::size_t g = 0; g < out->grid.size(); ++g) {
            const double x = out->grid[g];
            ASSERT_GE(x, tr.samples.front().t);
            ASSERT_LE(x, tr.samples.back().t);
            ASSERT_NEAR(out->values[g][0], a1 + b1 * x, 1e-9);
            ASSERT_NEAR(out->values[g][1], a2 + b2 * x, 1e-9);
        }
    }
}

TEST(Interpolate, ExactAtSampleTimes) {
    const Trajectory tr{"p", {{-5, 0.3, 0.7}, {0, 1.9, -2.1}, {5, 3.3, 4.4}, {10, -1, 2}}};
    const auto a = interpolate(tr, default_grid());
    ASSERT_TRUE(a.has_value());
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a->values[i][0], tr.samples[i].u1);
        EXPECT_EQ(a->values[i][1], tr.samples[i].u2);
    }
}

TEST(Dtw, Examples) {
    const Series x{{0, 0}, {1, 2}, {3, -1}};
    EXPECT_EQ(dtw(x, x), 0.0);
    EXPECT_DOUBLE_EQ(dtw(Series{{0, 0}}, Series{{3, 4}}), 5.0);
    EXPECT_DOUBLE_EQ(dtw(Series{{0, 0}, {1, 0}, {2, 0}}, Series{{0, 0}, {2, 0}}), 1.0);
    EXPECT_DOUBLE_EQ(brute_force_dtw(Series{{0, 0}, {1, 0}, {2, 0}}, Series{{0, 0}, {2, 0}}), 1.0);
    EXPECT_THROW(dtw(Series{}, x), DataError);
}

TEST(Dtw, MatchesPathEnumeration) {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const Series a = random_series(rng, 1 + rng.index(6));
        const Series b = random_series(rng, 1 + rng.index(6));
        const double d = dtw(a, b);
        ASSERT_NEAR(d, brute_force_dtw(a, b), 1e-12);
        ASSERT_EQ(d, dtw(b, a));
        const auto p = dtw_path(a, b);
        ASSERT_NEAR(p.cost, d, 1e-12);
        ASSERT_EQ(p.path.front(), (std::pair<std::size_t, std::size_t>{0, 0}));
        ASSERT_EQ(p.path.back(), (std::pair<std::size_t, std::size_t>{a.size() - 1, b.size() - 1}));
    }
}

TEST(Dtw, BoundedByDiagonalForEqualLengths) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(8);
        const Series a = random_series(rng, n);
        const Series b = random_series(rng, n);
        double diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diag += euclidean(a[i], b[i]);
        }
        ASSERT_LE(dtw(a, b), diag + 1e-12);
    }
}

TEST(DtwKMeans, SingleClusterAndOneClusterPerSeries) {
    Rng rng(13);
    std::vector<Series> series;
    for (int i = 0; i < 12; ++i) {
        series.push_back(random_series(rng, 3 + rng.index(3)));
    }
    KMeansConfig cfg;
    cfg.k = 1;
    const auto one = dtw_kmeans(series, cfg);
    EXPECT_TRUE(std::all_of(one.assignments.begin(), one.assignments.end(), [](int c) { return c == 0; }));
    EXPECT_NEAR(one.wcss, detail::cluster_cost(one.centroids[0], series), 1e-9);
    const Series refined = dba(one.centroids[0], series, 10);
    EXPECT_GE(detail::cluster_cost(refined, series), one.wcss * (1 - 1e-6));
    cfg.k = series.size();
    EXPECT_NEAR(dtw_kmeans(series, cfg).wcss, 0.0, 1e-12);
    cfg.k = series.size() + 1;
    EXPECT_THROW(dtw_kmeans(series, cfg), ConfigError);
}

TEST(DtwKMeans, ObjectiveNonIncreasingAndDeterministic) {
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Series> series;
        for (int i = 0; i < 40; ++i) {
            series.push_back(random_series(rng, 3 + rng.index(3)));
        }
        for (auto rule : {CentroidRule::Dba, CentroidRule::Medoid}) {
            KMeansConfig cfg;
            cfg.k = 2 + rng.index(4);
            cfg.seed = static_cast<std::uint64_t>(trial);
            cfg.rule = rule;
            const auto m = dtw_kmeans(series, cfg);
            for (std::size_t i = 1; i < m.wcss_history.size(); ++i) {
                ASSERT_LE(m.wcss_history[i], m.wcss_history[i - 1] + 1e-9);
            }
            double total = 0.0;
            for (std::size_t i = 0; i < series.size(); ++i) {
                const double d = dtw(series[i], m.centroids[static_cast<std::size_t>(m.assignments[i])]);
                total += d * d;
            }
            EXPECT_NEAR(total, m.wcss, 1e-9 * std::max(1.0, total));
            const auto again = dtw_kmeans(series, cfg);
            EXPECT_EQ(again.assignments, m.assignments);
            EXPECT_EQ(again.wcss, m.wcss);
        }
    }
}

TEST(DtwKMeans, RecoversPlantedArchetypes) {
    std::vector<int> truth;
    const auto series = planted_series(25, 0.8, 15, truth);
    KMeansConfig cfg;
    cfg.k = 4;
    const auto m = best_of_seeds(series, cfg, 5, 1);
    EXPECT_GE(adjusted_rand_index(m.assignments, truth), 0.9);
}

TEST(WcssSweep, MonotoneBestDeterministicAndElbow) {
    std::vector<int> truth;
    const auto series = planted_series(20, 0.5, 16, truth);
    const auto a = wcss_sweep(series, 2, 8, 5, 3);
    ASSERT_EQ(a.ks.size(), 7u);
    EXPECT_EQ(a.cells.size(), 35u);
    for (std::size_t i = 1; i < a.best.size(); ++i) {
        EXPECT_LE(a.best[i], a.best[i - 1] + 1e-9);
    }
    EXPECT_EQ(a.elbow, 4u);
    const auto b = wcss_sweep(series, 2, 8, 5, 3);
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].wcss, b.cells[i].wcss);
    }
}

TEST(ElbowPick, SecondDifference) {
    const std::vector<std::size_t> ks{2, 3, 4, 5, 6};
    EXPECT_EQ(elbow_pick(ks, std::vector<double>{100, 70, 40, 35, 32}), 4u);
    EXPECT_EQ(elbow_pick(ks, std::vector<double>{100, 40, 35, 32, 30}), 3u);
    EXPECT_THROW(elbow_pick(std::vector<std::size_t>{2, 3}, std::vector<double>{1, 0}), ConfigError);
}

TEST(AdjustedRand, MatchesPairCountingOracle) {
    Rng rng(17);
    const std::vector<int> a{0, 0, 1, 1, 2, 2};
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9};
    EXPECT_DOUBLE_EQ(adjusted_rand_index(a, relabeled), 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 5 + rng.index(60);
        std::vector<int> x(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<int>(rng.index(4));
            y[i] = rng.uniform() < 0.5 ? x[i] : static_cast<int>(rng.index(4));
        }
        const double oracle = pair_counting_ari(x, y);
        if (std::isfinite(oracle)) {
            ASSERT_NEAR(adjusted_rand_index(x, y), oracle, 1e-12);
        }
    }
}

TEST(Hungarian, MatchesPermutationSearch) {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t rows = 1 + rng.index(6);
        const std::size_t cols = 1 + rng.index(6);
        std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
        for (auto& r : w) {
            for (auto& v : r) {
                v = static_cast<double>(rng.index(20));
            }
        }
        const auto match = hungarian_max(w);
        ASSERT_EQ(match.size(), rows);
        double got = 0.0;
        std::set<int> used;
        for (std::size_t i = 0; i < rows; ++i) {
            if (match[i] >= 0) {
                ASSERT_TRUE(used.insert(match[i]).second);
                got += w[i][static_cast<std::size_t>(match[i])];
            }
        }
        ASSERT_EQ(used.size(), std::min(rows, cols));
        std::vector<std::size_t> perm(std::max(rows, cols));
        std::iota(perm.begin(), perm.end(), 0);
        double best = 0.0;
        do {
            double s = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                if (perm[i] < cols) {
                    s += w[i][perm[i]];
                }
            }
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        ASSERT_EQ(got, best);
    }
}

TEST(Robustness, JaccardExamples) {
    const Labeling a{{"a", 0}, {"b", 0}, {"c", 0}, {"d", 1}, {"x", 1}, {"y", 1}};
    const Labeling b{{"a", 1}, {"b", 0}, {"c", 0}, {"d", 0}, {"x", 1}, {"y", 1}};
    const auto m = match_clusters("A", a, "B", b);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].cluster_b, 0);
    EXPECT_DOUBLE_EQ(m[0].jaccard, 0.5);
    EXPECT_EQ(m[0].overlap, 2u);
    for (const auto& p : match_clusters("A", a, "A2", a)) {
        EXPECT_EQ(p.jaccard, 1.0);
    }
    const Labeling c{{"1", 0}, {"2", 1}, {"3", 2}, {"4", 2}};
    const Labeling d{{"1", 0}, {"2", 0}, {"3", 1}, {"4", 2}};
    const auto cd = match_clusters("C", c, "D", d);
    double lowest = 1.0;
    for (const auto& p : cd) {
        lowest = std::min(lowest, p.jaccard);
    }
    EXPECT_EQ(lowest, 0.0);
    const Labeling other{{"a", 0}, {"z", 0}};
    EXPECT_THROW(match_clusters("A", a, "O", other), DataError);
}

TEST(Robustness, InvariantUnderLabelPermutation) {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        Labeling a;
        Labeling b;
        Labeling b_perm;
        std::vector<int> perm{0, 1, 2, 3};
        rng.shuffle(perm);
        for (int i = 0; i < 40; ++i) {
            const std::string id = "p" + std::to_string(i);
            a[id] = static_cast<int>(rng.index(4));
            b[id] = rng.uniform() < 0.8 ? a[id] : static_cast<int>(rng.index(4));
            b_perm[id] = perm[static_cast<std::size_t>(b[id])];
        }
        auto collect = [](const std::vector<MatchedPair>& ps) {
            std::vector<double> v;
            for (const auto& p : ps) {
                v.push_back(p.jaccard);
            }
            std::sort(v.begin(), v.end());
            return v;
        };
        EXPECT_EQ(collect(match_clusters("a", a, "b", b)), collect(match_clusters("a", a, "b", b_perm)));
        EXPECT_EQ(collect(match_clusters("b", b, "a", a)), collect(match_clusters("b", b_perm, "a", a)));
    }
}

TEST(Robustness, MatricesAreSymmetricWithUnitDiagonal) {
    const std::map<std::string, Labeling> l{
        {"x", {{"1", 0}, {"2", 0}, {"3", 1}}},
        {"y", {{"1", 1}, {"2", 0}, {"3", 0}}},
    };
    const auto r = robustness(l);
    ASSERT_EQ(r.nodes.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(r.jaccard_matrix[i][i], 1.0);
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(r.jaccard_matrix[i][j], r.jaccard_matrix[j][i]);
        }
    }
    const std::string dir = testutil::scratch_dir();
    write_jaccard(dir + "/j.csv", r);
    EXPECT_NE(testutil::read_file(dir + "/j.csv").find("combo_a,cluster_a,combo_b,cluster_b,overlap,jaccard"), std::string::npos);
}
