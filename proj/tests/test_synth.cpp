#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trajlens/synth.hpp"
#include "trajlens/trajectory.hpp"

using namespace trajlens;

namespace {

CohortSpec two_archetype_spec() {
    CohortSpec s = bundled_profile_t2d();
    s.archetypes.resize(2);
    return s;
}

} // namespace

TEST(Synth, CaseCountsAndArchetypeBalance) {
    const auto cohort = generate_cohort(two_archetype_spec(), 100, 1);
    std::size_t cases = 0;
    std::size_t controls = 0;
    for (const auto& p : cohort.patients) {
        (p.label == Label::Case ? cases : controls) += 1;
    }
    EXPECT_EQ(cases, 100u);
    EXPECT_EQ(controls, 150u);
    std::map<int, int> per_arch;
    for (const auto& [pid, a] : cohort.truth.patient_archetype) {
        ++per_arch[a];
    }
    EXPECT_EQ(per_arch, (std::map<int, int>{{0, 50}, {1, 50}}));
}

TEST(Synth, SameSeedGivesByteIdenticalFiles) {
    const std::string a = testutil::scratch_dir("a");
    const std::string b = testutil::scratch_dir("b");
    const std::string c = testutil::scratch_dir("c");
    write_cohort(a, generate_cohort(bundled_profile_t2d(), 80, 5));
    write_cohort(b, generate_cohort(bundled_profile_t2d(), 80, 5));
    write_cohort(c, generate_cohort(bundled_profile_t2d(), 80, 6));
    for (const char* f : {"/events.jsonl", "/patients.jsonl", "/ground_truth.json", "/themes.csv"}) {
        EXPECT_EQ(testutil::read_file(a + f), testutil::read_file(b + f)) << f;
    }
    EXPECT_NE(testutil::read_file(a + "/events.jsonl"), testutil::read_file(c + "/events.jsonl"));
}

TEST(Synth, ThemeFrequenciesWithinThreeSigma) {
    const CohortSpec spec = bundled_profile_t2d();
    const auto cohort = generate_cohort(spec, 2000, 9);
    std::map<std::string, Date> diagnosis;
    for (const auto& p : cohort.patients) {
        if (p.diagnosis_date && cohort.truth.patient_archetype.at(p.patient_id) == 0) {
            diagnosis.emplace(p.patient_id, *p.diagnosis_date);
        }
    }
    const ArchetypeSpec& arch = spec.archetypes[0];
    std::vector<std::map<std::string, double>> counts(arch.windows.size());
    for (const auto& e : cohort.events) {
        const auto d = diagnosis.find(e.patient_id);
        const auto theme = cohort.truth.marker_theme.find(e.description);
        if (d == diagnosis.end() || theme == cohort.truth.marker_theme.end()) {
            continue;
        }
        const double t = years_between(d->second, e.date);
        for (std::size_t w = 0; w < arch.windows.size(); ++w) {
            if (t >= spec.bounds[w] && t < spec.bounds[w + 1] && arch.windows[w].theme_probs.count(theme->second)) {
                counts[w][theme->second] += 1;
            }
        }
    }
    for (std::size_t w = 0; w < arch.windows.size(); ++w) {
        double total = 0.0;
        for (const auto& [theme, n] : counts[w]) {
            total += n;
        }
        ASSERT_GT(total, 1000.0);
        for (const auto& [theme, p] : arch.windows[w].theme_probs) {
            const double expected = total * p;
            const double sd = std::sqrt(total * p * (1 - p));
            EXPECT_LE(std::abs(counts[w][theme] - expected), 3 * sd + 1e-9) << "window " << w << " theme " << theme;
        }
    }
}

TEST(Synth, BundledProfileShape) {
    const CohortSpec spec = bundled_profile_t2d();
    ASSERT_EQ(spec.archetypes.size(), 4u);
    EXPECT_NEAR(spec.archetypes[1].p_male, 0.9, 1e-12);
    const auto cohort = generate_cohort(spec, 4000, 3);
    double males = 0.0;
    double total = 0.0;
    for (const auto& p : cohort.patients) {
        if (p.label == Label::Case && cohort.truth.patient_archetype.at(p.patient_id) == 1) {
            total += 1;
            males += p.sex == Sex::Male ? 1 : 0;
        }
    }
    EXPECT_NEAR(males / total, 0.9, 3 * std::sqrt(0.09 / total));
    for (const auto& a : spec.archetypes) {
        for (const auto& w : a.windows) {
            double sum = 0.0;
            for (const auto& [theme, p] : w.theme_probs) {
                sum += p;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
            EXPECT_GT(w.rate_per_year, 0.0);
        }
    }
}

TEST(Synth, RejectsDegenerateSpecs) {
    CohortSpec spec = bundled_profile_t2d();
    EXPECT_THROW(generate_cohort(spec, 39, 1), ConfigError);
    spec.archetypes[0].windows[1].theme_probs = {{"renal", 0.0}};
    EXPECT_THROW(generate_cohort(spec, 400, 1), ConfigError);
    CohortSpec single = bundled_profile_t2d();
    single.archetypes.resize(1);
    EXPECT_THROW(generate_cohort(single, 400, 1), ConfigError);
    CohortSpec unknown = bundled_profile_t2d();
    unknown.archetypes[0].windows[0].theme_probs = {{"nonexistent", 1.0}};
    EXPECT_THROW(generate_cohort(unknown, 400, 1), ConfigError);
}

TEST(Synth, FilesLoadThroughCohortSchemasAndTruthIsTotal) {
    const std::string dir = testutil::scratch_dir();
    const auto cohort = generate_cohort(bundled_profile_t2d(), 60, 2);
    write_cohort(dir, cohort);
    const auto records = io::load_records(dir + "/events.jsonl", dir + "/patients.jsonl");
    EXPECT_EQ(records.size(), cohort.patients.size());
    const auto truth = GroundTruth::from_json(nlohmann::json::parse(testutil::read_file(dir + "/ground_truth.json")));
    EXPECT_EQ(truth.patient_archetype.size(), 60u);
    for (const auto& p : cohort.patients) {
        EXPECT_EQ(truth.patient_archetype.count(p.patient_id), p.label == Label::Case ? 1u : 0u);
    }
    for (const auto& e : cohort.events) {
        if (e.code.rfind("E11", 0) != 0) {
            EXPECT_TRUE(truth.marker_theme.count(e.description)) << e.description;
        }
    }
    EXPECT_EQ(truth.stage_names.size(), 3u);
}

TEST(Synth, PlantedTrajectoriesSeparateArchetypes) {
    const CohortSpec spec = bundled_profile_t2d();
    const auto cohort = generate_cohort(spec, 200, 4);
    const auto inputs = planted_trajectories(cohort, spec, 1.5, 8);
    const auto built = build_trajectories(inputs);
    std::vector<Series> series;
    std::vector<int> truth;
    for (const auto& tr : built.trajectories) {
        if (auto a = interpolate(tr, default_grid())) {
            series.push_back(a->values);
            truth.push_back(cohort.truth.patient_archetype.at(tr.patient_id));
        }
    }
    ASSERT_GT(series.size(), 150u);
    KMeansConfig cfg;
    cfg.k = 4;
    const auto m = best_of_seeds(series, cfg, 5, 0);
    EXPECT_GE(adjusted_rand_index(m.assignments, truth), 0.9);
}
