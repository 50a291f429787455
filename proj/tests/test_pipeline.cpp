#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "trajlens/pipeline.hpp"

using namespace trajlens;

#ifndef TRAJLENS_CLI
#define TRAJLENS_CLI "trajlens"
#endif

namespace {

nlohmann::json small_config_json(const std::string& out) {
    return nlohmann::json{
        {"output_dir", out},
        {"seed", 3},
        {"input", {{"synth", {{"profile", "t2d"}, {"n", 80}}}}},
        {"cohort", {{"case_medications", {"DR*"}}}},
        {"tokenize", {{"vocab_size", 600}}},
        {"embed", {{"dim", 24}}},
        {"cluster", {{"seeds", 3}, {"k_max", 6}}},
    };
}

RunConfig small_config(const std::string& out) { return RunConfig::from_json(small_config_json(out)); }

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(TRAJLENS_CLI) + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool exists(const std::string& dir, const std::string& file) { return std::filesystem::exists(std::filesystem::path(dir) / file); }

} // namespace

TEST(Sha256, KnownDigest) {
    const std::string dir = testutil::scratch_dir();
    testutil::write_file(dir + "/abc.txt", "abc");
    EXPECT_EQ(sha256_file(dir + "/abc.txt"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_THROW(sha256_file(dir + "/missing"), DataError);
}

TEST(RunConfigJson, RoundTripAndDefaults) {
    const RunConfig c = small_config("out");
    EXPECT_TRUE(c.synth);
    EXPECT_EQ(c.synth_patients, 80u);
    EXPECT_EQ(c.case_medications, (std::vector<std::string>{"DR*"}));
    EXPECT_EQ(c.max_len, 64u);
    EXPECT_EQ(c.reduce.n_neighbors, 15u);
    EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
    EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigJson, RejectsUnknownKeysTypesAndChoices) {
    auto j = small_config_json("out");
    j["cohort"]["max_length"] = 64;
    EXPECT_THROW(RunConfig::from_json(j), ConfigError);
    j = small_config_json("out");
    j["surprise"] = true;
    EXPECT_THROW(RunConfig::from_json(j), ConfigError);
    j = small_config_json("out");
    j["cluster"]["k"] = "four";
    EXPECT_THROW(RunConfig::from_json(j), ConfigError);
    j = small_config_json("out");
    j["reduce"] = {{"init", "spectral"}};
    EXPECT_THROW(RunConfig::from_json(j), ConfigError);
    const std::string dir = testutil::scratch_dir();
    testutil::write_file(dir + "/bad.json", "{ not json");
    EXPECT_THROW(load_run_config(dir + "/bad.json"), ConfigError);
}

TEST(RunConfigValidate, DependenciesAndSettings) {
    RunConfig c = small_config("out");
    c.stages["reduce"] = false;
    try {
        c.validate();
        FAIL() << "expected a configuration error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("reduce"), std::string::npos);
    }
    c = small_config("out");
    c.events = "events.jsonl";
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config("out");
    c.reduce.min_dist = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config("out");
    c.bounds = {0.0, -10.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config("out");
    c.folds = 2;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config("");
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config("out");
    c.sweep = true;
    c.sweep_min_dist = {0.5};
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(run_pipeline(c), ConfigError);
}

TEST(RunPipeline, SevenStagesDeterministicManifest) {
    const std::string a = testutil::scratch_dir("a");
    const std::string b = testutil::scratch_dir("b");
    const RunResult ra = run_pipeline(small_config(a));
    const RunResult rb = run_pipeline(small_config(b));
    ASSERT_EQ(ra.stages.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(ra.stages[i].stage, stage_names()[i]);
        EXPECT_FALSE(ra.stages[i].outputs.empty());
    }
    EXPECT_EQ(ra.manifest, rb.manifest);
    EXPECT_EQ(ra.manifest["stages"].size(), 7u);
    for (const auto& st : ra.manifest["stages"]) {
        for (const auto& f : st["outputs"]) {
            EXPECT_EQ(f["sha256"].get<std::string>().size(), 64u);
            EXPECT_TRUE(exists(a, f["file"].get<std::string>()));
        }
    }
    for (const char* f : {"config.json", "manifest.json", "records.jsonl", "sequences.jsonl", "embeddings.csv", "reduced.csv",
                          "correlations.csv", "clusters.csv", "wcss.csv", "cluster_means.csv", "prevalence.csv", "demographics.csv"}) {
        EXPECT_TRUE(exists(a, f)) << f;
    }
    const RunConfig saved = load_run_config(a + "/config.json");
    EXPECT_EQ(saved.seed, 3u);
    RunConfig other = small_config(testutil::scratch_dir("c"));
    other.seed = 4;
    EXPECT_NE(run_pipeline(other).manifest, ra.manifest);
}

TEST(RunPipeline, DataErrorsNameTheStage) {
    const std::string dir = testutil::scratch_dir();
    testutil::write_file(dir + "/events.jsonl", "{\"patient_id\": \"p1\", \"date\": \"not a date\"}\n");
    testutil::write_file(dir + "/patients.jsonl", "{\"patient_id\": \"p1\", \"sex\": \"F\", \"birth_year\": 1950}\n");
    RunConfig c;
    c.output_dir = dir + "/out";
    c.events = dir + "/events.jsonl";
    c.patients = dir + "/patients.jsonl";
    try {
        run_pipeline(c);
        FAIL() << "expected a data error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("stage cohort"), std::string::npos) << e.what();
    }
}

TEST(RunPipeline, PartialRunStopsAfterDisabledTail) {
    const std::string dir = testutil::scratch_dir();
    RunConfig c = small_config(dir);
    c.stages["interpret"] = false;
    c.stages["cluster"] = false;
    c.stages["report"] = false;
    const RunResult r = run_pipeline(c);
    ASSERT_EQ(r.stages.size(), 4u);
    EXPECT_EQ(r.stages.back().stage, "reduce");
    EXPECT_FALSE(exists(dir, "clusters.csv"));
}

TEST(Cli, ExitCodes) {
    const std::string dir = testutil::scratch_dir();
    const std::string log = dir + "/log.txt";
    EXPECT_EQ(run_cli("--help", log), 0);
    EXPECT_EQ(run_cli("", log), 2);
    EXPECT_EQ(run_cli("cluster --no-such-flag", log), 2);
    testutil::write_file(dir + "/unknown.json", "{\"output_dir\": \"x\", \"bogus\": 1}");
    EXPECT_EQ(run_cli("run --config " + dir + "/unknown.json", log), 2);
    EXPECT_NE(testutil::read_file(log).find("bogus"), std::string::npos);
    testutil::write_file(dir + "/events.jsonl", "{\"patient_id\": \"p1\"\n");
    testutil::write_file(dir + "/patients.jsonl", "{\"patient_id\": \"p1\", \"sex\": \"F\", \"birth_year\": 1950}\n");
    EXPECT_EQ(run_cli("cohort --out " + dir + "/o --events " + dir + "/events.jsonl --patients " + dir + "/patients.jsonl", log), 3);
    EXPECT_EQ(run_cli("reduce --out " + dir + "/empty", log), 3);
    EXPECT_EQ(run_cli("reduce --out " + dir + "/empty --min-dist 0", log), 2);
}

TEST(Cli, StageByStageChain) {
    const std::string dir = testutil::scratch_dir();
    const std::string out = dir + "/work";
    const std::string log = dir + "/log.txt";
    ASSERT_EQ(run_cli("synth --n 60 --seed 2 --out " + out + "/input", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("cohort --out " + out + " --events " + out + "/input/events.jsonl --patients " + out +
                          "/input/patients.jsonl --case-medications DR* --bounds=-10,0,10,20",
                      log),
              0)
        << testutil::read_file(log);
    ASSERT_EQ(run_cli("tokenize --out " + out + " --vocab-size 500", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("tokenize --out " + out + " --encode " + out + "/vocab.txt", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("embed --out " + out + " --dim 16", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("classify --out " + out + " --train", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("classify --out " + out + " --eval " + out + "/classifier_model_0.json", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("reduce --out " + out + " --epochs 50", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("interpret --out " + out + " --top-k 5 --themes " + out + "/input/themes.csv", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("cluster --out " + out + " --k 3 --seeds 2 --no-elbow --grid=-5,0,5,10,15", log), 0) << testutil::read_file(log);
    ASSERT_EQ(run_cli("report --out " + out + " --themes " + out + "/input/themes.csv", log), 0) << testutil::read_file(log);
    for (const char* f : {"snapshots.jsonl", "vocab.txt", "sequences.jsonl", "embeddings.csv", "classifier_metrics.json",
                          "classifier_eval.json", "reduced.csv", "correlations.csv", "clusters.csv", "prevalence.csv"}) {
        EXPECT_TRUE(exists(out, f)) << f;
    }
    const std::string corr = testutil::read_file(out + "/correlations.csv");
    EXPECT_EQ(corr.substr(0, corr.find('\n')), "theme,marker,r_u1,r_u2,l2");
}

TEST(Cli, RunMatchesLibraryAndSeedOverride) {
    const std::string dir = testutil::scratch_dir();
    testutil::write_file(dir + "/cfg.json", small_config_json(dir + "/from_config").dump());
    const std::string log = dir + "/log.txt";
    ASSERT_EQ(run_cli("run --config " + dir + "/cfg.json --out " + dir + "/cli", log), 0) << testutil::read_file(log);
    const RunResult lib = run_pipeline(small_config(dir + "/lib"));
    EXPECT_EQ(nlohmann::json::parse(testutil::read_file(dir + "/cli/manifest.json")), lib.manifest);
    ASSERT_EQ(run_cli("run --config " + dir + "/cfg.json --out " + dir + "/seeded --seed 4", log), 0) << testutil::read_file(log);
    EXPECT_EQ(load_run_config(dir + "/seeded/config.json").seed, 4u);
}
