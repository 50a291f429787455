#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "trajlens/cohort.hpp"
#include "trajlens/embedder.hpp"
#include "trajlens/error.hpp"
#include "trajlens/interpret.hpp"
#include "trajlens/reduce.hpp"
#include "trajlens/report.hpp"
#include "trajlens/synth.hpp"
#include "trajlens/tokenizer.hpp"
#include "trajlens/trajectory.hpp"

namespace trajlens {

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path + " for hashing");
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest initialization failed");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"cohort", "tokenize", "embed", "reduce", "interpret", "cluster", "report"};
    return names;
}

/// Every setting of a pipeline run. Parsed from JSON, validated before any stage runs.
struct RunConfig {
    std::string output_dir;
    std::uint64_t seed = 0;

    std::string events;
    std::string patients;
    bool synth = false;
    std::string synth_profile = "t2d";
    std::size_t synth_patients = 400;

    std::map<std::string, bool> stages{{"cohort", true}, {"tokenize", true}, {"embed", true}, {"reduce", true},
                                       {"interpret", true}, {"cluster", true}, {"report", true}};

    // cohort
    std::vector<double> bounds{-10.0, 0.0, 10.0, 20.0};
    std::size_t max_len = 64;
    MergeScope merge_scope = MergeScope::HospitalOnly;
    std::vector<std::string> exclude_codes{"E11*"};
    std::vector<std::string> type1_codes{"E10*"};
    std::vector<std::string> type2_codes{"E11*"};
    std::vector<std::string> undefined_codes{"E14*"};
    std::vector<std::string> case_medications{"A10B*"};
    std::vector<std::string> type1_medications;
    bool match = true;
    int year_tolerance = 2;
    int folds = 5;

    // tokenize
    std::size_t vocab_size = 2025;

    // embed
    std::string embed_mode = "baseline";
    std::string embeddings_path;
    bool normalize_ingested = true;
    BaselineConfig baseline;
    bool classify = false;
    ClassifierConfig classifier;

    // reduce
    ReduceConfig reduce;
    bool reduce_cases_only = true;
    bool sweep = false;
    std::vector<std::size_t> sweep_n_neighbors{15, 30, 50, 100};
    std::vector<double> sweep_min_dist{0.01, 0.1, 0.5, 1.0};

    // interpret
    bool interpret_cases_only = true;
    CorrelationMode correlation_mode = CorrelationMode::Pooled;
    std::size_t top_k = 0;
    std::string themes_path;
    std::string synonyms_path;

    // cluster
    std::size_t k = 4;
    int seeds = 20;
    std::vector<double> grid = default_grid();
    int max_iterations = 50;
    int dba_iterations = 10;
    CentroidRule rule = CentroidRule::Dba;
    std::size_t min_samples = 3;
    std::size_t min_points = 3;
    bool elbow = true;
    std::size_t k_min = 2;
    std::size_t k_max = 8;

    // report
    PrevalenceMode prevalence = PrevalenceMode::Cumulative;

    bool enabled(const std::string& stage) const { return stages.at(stage); }

    /// Throws ConfigError on any inconsistent setting, including a stage enabled without the stages it reads from.
    void validate() const {
        if (output_dir.empty()) {
            throw ConfigError("config: output_dir is required");
        }
        if (synth && (!events.empty() || !patients.empty())) {
            throw ConfigError("config: give either input.events/input.patients or input.synth, not both");
        }
        if (enabled("cohort") && !synth && (events.empty() || patients.empty())) {
            throw ConfigError("config: cohort stage needs input.events and input.patients (or input.synth)");
        }
        const std::map<std::string, std::vector<std::string>> needs{{"tokenize", {"cohort"}},  {"embed", {"tokenize"}},
                                                                    {"reduce", {"embed"}},     {"interpret", {"reduce"}},
                                                                    {"cluster", {"reduce"}},   {"report", {"cluster"}}};
        for (const auto& [stage, deps] : needs) {
            for (const auto& dep : deps) {
                if (enabled(stage) && !enabled(dep)) {
                    throw ConfigError("config: stage '" + stage + "' is enabled but '" + dep + "' is disabled");
                }
            }
        }
        validate_settings();
    }

    /// Hyperparameter checks only; used when a single stage runs on an existing output directory.
    void validate_settings() const {
        if (synth && synth_profile != "t2d") {
            throw ConfigError("config: unknown synth profile '" + synth_profile + "'");
        }
        validate_bounds(bounds);
        if (max_len < 3) {
            throw ConfigError("config: cohort.max_len must be at least 3");
        }
        if (folds < 3) {
            throw ConfigError("config: cohort.folds must be at least 3");
        }
        if (year_tolerance < 0) {
            throw ConfigError("config: cohort.year_tolerance must be non-negative");
        }
        if (vocab_size <= Vocabulary::kNumSpecials) {
            throw ConfigError("config: tokenize.vocab_size too small");
        }
        if (embed_mode != "baseline" && embed_mode != "ingest") {
            throw ConfigError("config: embed.mode must be 'baseline' or 'ingest'");
        }
        if (embed_mode == "ingest" && embeddings_path.empty()) {
            throw ConfigError("config: embed.mode 'ingest' needs embed.path");
        }
        if (baseline.dim == 0) {
            throw ConfigError("config: embed.dim must be positive");
        }
        if (reduce.n_neighbors < 2) {
            throw ConfigError("config: reduce.n_neighbors must be at least 2");
        }
        if (!(reduce.min_dist > 0.0) || reduce.min_dist > reduce.spread) {
            throw ConfigError("config: reduce.min_dist must lie in (0, spread]");
        }
        for (double md : sweep_min_dist) {
            if (sweep && (!(md > 0.0) || md > reduce.spread)) {
                throw ConfigError("config: reduce.sweep_min_dist values must lie in (0, spread]");
            }
        }
        for (std::size_t nn : sweep_n_neighbors) {
            if (sweep && nn < 2) {
                throw ConfigError("config: reduce.sweep_n_neighbors values must be at least 2");
            }
        }
        if (sweep) {
            if (sweep_n_neighbors.empty() || sweep_min_dist.empty()) {
                throw ConfigError("config: empty sweep grid");
            }
            const bool has_primary =
                std::find(sweep_n_neighbors.begin(), sweep_n_neighbors.end(), reduce.n_neighbors) != sweep_n_neighbors.end() &&
                std::find(sweep_min_dist.begin(), sweep_min_dist.end(), reduce.min_dist) != sweep_min_dist.end();
            if (!has_primary) {
                throw ConfigError("config: sweep grid must contain the primary n_neighbors/min_dist");
            }
        }
        if (grid.size() < 2 || !std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
            throw ConfigError("config: cluster.grid must be strictly increasing with at least two points");
        }
        if (k == 0 || seeds < 1 || max_iterations < 1) {
            throw ConfigError("config: cluster.k, cluster.seeds and cluster.max_iterations must be positive");
        }
        if (elbow && (k_min < 1 || k_max < k_min + 2)) {
            throw ConfigError("config: cluster.k_min/k_max must span at least three values");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json input;
        if (synth) {
            input["synth"] = {{"profile", synth_profile}, {"n", synth_patients}};
        } else {
            input["events"] = events;
            input["patients"] = patients;
        }
        return {
            {"output_dir", output_dir},
            {"seed", seed},
            {"input", input},
            {"stages", stages},
            {"cohort",
             {{"bounds", bounds},
              {"max_len", max_len},
              {"merge_scope", merge_scope == MergeScope::HospitalOnly ? "hospital" : "all"},
              {"exclude_codes", exclude_codes},
              {"type1_codes", type1_codes},
              {"type2_codes", type2_codes},
              {"undefined_codes", undefined_codes},
              {"case_medications", case_medications},
              {"type1_medications", type1_medications},
              {"match_controls", match},
              {"year_tolerance", year_tolerance},
              {"folds", folds}}},
            {"tokenize", {{"vocab_size", vocab_size}}},
            {"embed",
             {{"mode", embed_mode},
              {"path", embeddings_path},
              {"normalize", normalize_ingested},
              {"dim", baseline.dim},
              {"window", baseline.window},
              {"power_iterations", baseline.power_iterations},
              {"oversampling", baseline.oversampling},
              {"classify", classify},
              {"classifier",
               {{"epochs", classifier.epochs},
                {"batch_size", classifier.batch_size},
                {"learning_rate", classifier.learning_rate},
                {"weight_decay", classifier.weight_decay},
                {"warmup_fraction", classifier.warmup_fraction},
                {"checks_per_epoch", classifier.checks_per_epoch},
                {"patience", classifier.patience}}}}},
            {"reduce",
             {{"n_neighbors", reduce.n_neighbors},
              {"min_dist", reduce.min_dist},
              {"spread", reduce.spread},
              {"epochs", reduce.epochs},
              {"negative_samples", reduce.negative_samples},
              {"learning_rate", reduce.initial_lr},
              {"init", reduce.init == LayoutInit::Pca ? "pca" : "random"},
              {"fit_on", reduce_cases_only ? "cases" : "all"},
              {"sweep", sweep},
              {"sweep_n_neighbors", sweep_n_neighbors},
              {"sweep_min_dist", sweep_min_dist}}},
            {"interpret",
             {{"labels", interpret_cases_only ? "cases" : "all"},
              {"mode", correlation_mode == CorrelationMode::Pooled ? "pooled" : "per_window"},
              {"top_k", top_k},
              {"themes", themes_path},
              {"synonyms", synonyms_path}}},
            {"cluster",
             {{"k", k},
              {"seeds", seeds},
              {"grid", grid},
              {"max_iterations", max_iterations},
              {"dba_iterations", dba_iterations},
              {"centroid", rule == CentroidRule::Dba ? "dba" : "medoid"},
              {"min_samples", min_samples},
              {"min_points", min_points},
              {"elbow", elbow},
              {"k_min", k_min},
              {"k_max", k_max}}},
            {"report", {{"prevalence", prevalence == PrevalenceMode::Cumulative ? "cumulative" : "per_window"}}},
        };
    }

    static RunConfig from_json(const nlohmann::json& j);
};

namespace detail {

/// Reads known keys of one JSON object and rejects anything else.
class Section {
public:
    Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + name_ + "' must be an object");
        }
    }

    template <typename T>
    void get(const std::string& key, T& target) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return;
        }
        try {
            target = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError("config: " + name_ + "." + key + ": " + ex.what());
        }
    }

    template <typename T>
    void choice(const std::string& key, T& target, const std::map<std::string, T>& options) {
        std::string value;
        get(key, value);
        if (value.empty()) {
            return;
        }
        const auto it = options.find(value);
        if (it == options.end()) {
            throw ConfigError("config: " + name_ + "." + key + ": unknown value '" + value + "'");
        }
        target = it->second;
    }

    const nlohmann::json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError("config: unknown key '" + (name_.empty() ? key : name_ + "." + key) + "'");
            }
        }
    }

private:
    const nlohmann::json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

} // namespace detail

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::Section root(j, "");
    root.get("output_dir", c.output_dir);
    root.get("seed", c.seed);
    if (const auto* in = root.child("input")) {
        detail::Section s(*in, "input");
        s.get("events", c.events);
        s.get("patients", c.patients);
        if (const auto* sy = s.child("synth")) {
            c.synth = true;
            detail::Section t(*sy, "input.synth");
            t.get("profile", c.synth_profile);
            t.get("n", c.synth_patients);
            t.finish();
        }
        s.finish();
    }
    if (const auto* st = root.child("stages")) {
        detail::Section s(*st, "stages");
        for (const auto& name : stage_names()) {
            s.get(name, c.stages[name]);
        }
        s.finish();
    }
    if (const auto* co = root.child("cohort")) {
        detail::Section s(*co, "cohort");
        s.get("bounds", c.bounds);
        s.get("max_len", c.max_len);
        s.choice<MergeScope>("merge_scope", c.merge_scope, {{"hospital", MergeScope::HospitalOnly}, {"all", MergeScope::AllSources}});
        s.get("exclude_codes", c.exclude_codes);
        s.get("type1_codes", c.type1_codes);
        s.get("type2_codes", c.type2_codes);
        s.get("undefined_codes", c.undefined_codes);
        s.get("case_medications", c.case_medications);
        s.get("type1_medications", c.type1_medications);
        s.get("match_controls", c.match);
        s.get("year_tolerance", c.year_tolerance);
        s.get("folds", c.folds);
        s.finish();
    }
    if (const auto* to = root.child("tokenize")) {
        detail::Section s(*to, "tokenize");
        s.get("vocab_size", c.vocab_size);
        s.finish();
    }
    if (const auto* em = root.child("embed")) {
        detail::Section s(*em, "embed");
        s.get("mode", c.embed_mode);
        s.get("path", c.embeddings_path);
        s.get("normalize", c.normalize_ingested);
        s.get("dim", c.baseline.dim);
        s.get("window", c.baseline.window);
        s.get("power_iterations", c.baseline.power_iterations);
        s.get("oversampling", c.baseline.oversampling);
        s.get("classify", c.classify);
        if (const auto* cl = s.child("classifier")) {
            detail::Section t(*cl, "embed.classifier");
            t.get("epochs", c.classifier.epochs);
            t.get("batch_size", c.classifier.batch_size);
            t.get("learning_rate", c.classifier.learning_rate);
            t.get("weight_decay", c.classifier.weight_decay);
            t.get("warmup_fraction", c.classifier.warmup_fraction);
            t.get("checks_per_epoch", c.classifier.checks_per_epoch);
            t.get("patience", c.classifier.patience);
            t.finish();
        }
        s.finish();
    }
    if (const auto* re = root.child("reduce")) {
        detail::Section s(*re, "reduce");
        s.get("n_neighbors", c.reduce.n_neighbors);
        s.get("min_dist", c.reduce.min_dist);
        s.get("spread", c.reduce.spread);
        s.get("epochs", c.reduce.epochs);
        s.get("negative_samples", c.reduce.negative_samples);
        s.get("learning_rate", c.reduce.initial_lr);
        s.choice<LayoutInit>("init", c.reduce.init, {{"pca", LayoutInit::Pca}, {"random", LayoutInit::Random}});
        s.choice<bool>("fit_on", c.reduce_cases_only, {{"cases", true}, {"all", false}});
        s.get("sweep", c.sweep);
        s.get("sweep_n_neighbors", c.sweep_n_neighbors);
        s.get("sweep_min_dist", c.sweep_min_dist);
        s.finish();
    }
    if (const auto* it = root.child("interpret")) {
        detail::Section s(*it, "interpret");
        s.choice<bool>("labels", c.interpret_cases_only, {{"cases", true}, {"all", false}});
        s.choice<CorrelationMode>("mode", c.correlation_mode, {{"pooled", CorrelationMode::Pooled}, {"per_window", CorrelationMode::PerWindow}});
        s.get("top_k", c.top_k);
        s.get("themes", c.themes_path);
        s.get("synonyms", c.synonyms_path);
        s.finish();
    }
    if (const auto* cl = root.child("cluster")) {
        detail::Section s(*cl, "cluster");
        s.get("k", c.k);
        s.get("seeds", c.seeds);
        s.get("grid", c.grid);
        s.get("max_iterations", c.max_iterations);
        s.get("dba_iterations", c.dba_iterations);
        s.choice<CentroidRule>("centroid", c.rule, {{"dba", CentroidRule::Dba}, {"medoid", CentroidRule::Medoid}});
        s.get("min_samples", c.min_samples);
        s.get("min_points", c.min_points);
        s.get("elbow", c.elbow);
        s.get("k_min", c.k_min);
        s.get("k_max", c.k_max);
        s.finish();
    }
    if (const auto* rp = root.child("report")) {
        detail::Section s(*rp, "report");
        s.choice<PrevalenceMode>("prevalence", c.prevalence, {{"cumulative", PrevalenceMode::Cumulative}, {"per_window", PrevalenceMode::PerWindow}});
        s.finish();
    }
    root.finish();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    try {
        return RunConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& ex) {
        throw ConfigError("config " + path + ": " + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Stages. Each reads its inputs from `dir` and returns the files it wrote there.

namespace stage {

inline std::string at(const std::string& dir, const std::string& name) { return (std::filesystem::path(dir) / name).string(); }

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& ex) {
        throw DataError(path + ": " + ex.what());
    }
}

inline DiabetesCodeSets code_sets(const RunConfig& c) {
    return {CodeSet(c.type1_codes), CodeSet(c.type2_codes), CodeSet(c.undefined_codes), CodeSet(c.case_medications),
            CodeSet(c.type1_medications)};
}

/// Cleans and labels records, matches controls, builds snapshots and assigns folds.
inline std::vector<std::string> cohort(const RunConfig& c, const std::string& events, const std::string& patients, const std::string& dir) {
    const auto records = io::load_records(events, patients, c.merge_scope);
    const DiabetesCodeSets sets = code_sets(c);
    std::vector<PatientRecord> cases;
    std::vector<PatientRecord> pool;
    std::size_t dropped = 0;
    for (const auto& input : records) {
        PatientRecord r = sets.case_medications.empty() ? input : relabel_by_medication(input, sets);
        if (r.label == Label::Case) {
            cases.push_back(std::move(r));
        } else if (r.label == Label::Dropped) {
            ++dropped;
        } else {
            pool.push_back(std::move(r));
        }
    }
    const std::size_t pool_before = pool.size();
    pool = filter_control_pool(std::move(pool), sets);

    std::vector<PatientRecord> retained = cases;
    nlohmann::json unmatched = nlohmann::json::array();
    if (c.match) {
        auto m = match_controls(cases, pool, derive_seed(c.seed, "match"), c.year_tolerance);
        retained.insert(retained.end(), m.controls.begin(), m.controls.end());
        unmatched = m.unmatched;
    }
    std::sort(retained.begin(), retained.end(), [](const PatientRecord& a, const PatientRecord& b) { return a.patient_id < b.patient_id; });

    const CodeSet exclude(c.exclude_codes);
    std::vector<Snapshot> snapshots;
    for (const auto& r : retained) {
        auto s = build_snapshots(r, c.bounds, exclude);
        snapshots.insert(snapshots.end(), s.begin(), s.end());
    }
    std::vector<std::string> ids;
    for (const auto& r : retained) {
        ids.push_back(r.patient_id);
    }
    const FoldAssignment folds = assign_folds(ids, c.folds, derive_seed(c.seed, "folds"));

    io::write_records(at(dir, "records.jsonl"), retained);
    io::write_snapshots(at(dir, "snapshots.jsonl"), snapshots);
    write_json(at(dir, "folds.json"), folds.to_json());
    write_json(at(dir, "cohort_summary.json"), {{"input_patients", records.size()},
                                                {"cases", cases.size()},
                                                {"dropped", dropped},
                                                {"control_pool", pool_before},
                                                {"control_pool_eligible", pool.size()},
                                                {"controls", retained.size() - cases.size()},
                                                {"unmatched_cases", unmatched},
                                                {"snapshots", snapshots.size()}});
    return {"records.jsonl", "snapshots.jsonl", "folds.json", "cohort_summary.json"};
}

struct Sequences {
    std::vector<Snapshot> snapshots;
    std::vector<TokenSequence> tokens;

    std::vector<SnapshotKey> keys() const {
        std::vector<SnapshotKey> out;
        out.reserve(snapshots.size());
        for (const auto& s : snapshots) {
            out.push_back({s.patient_id, s.snapshot_index});
        }
        return out;
    }
};

inline Sequences read_sequences(const std::string& path, std::size_t max_len) {
    Sequences out;
    for (const auto& j : io::read_jsonl(path)) {
        out.snapshots.push_back(io::snapshot_from_json(j));
        TokenSequence seq;
        try {
            seq.ids = j.at("token_ids").get<std::vector<int>>();
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(path + ": " + ex.what());
        }
        seq.length = seq.ids.size();
        if (seq.length > max_len) {
            throw DataError(path + ": sequence for " + out.snapshots.back().patient_id + " exceeds max_len");
        }
        seq.ids.resize(max_len, Vocabulary::kPad);
        out.tokens.push_back(std::move(seq));
    }
    return out;
}

/// Trains the vocabulary (or loads `vocab_path`), splits snapshots to the length cap and encodes them.
inline std::vector<std::string> tokenize(const RunConfig& c, const std::string& dir, const std::string& vocab_path = "") {
    const auto snapshots = io::read_snapshots(at(dir, "snapshots.jsonl"));
    std::vector<std::string> corpus;
    for (const auto& s : snapshots) {
        for (const auto& e : s.entries) {
            corpus.push_back(e.description);
        }
    }
    TrainResult trained;
    if (vocab_path.empty()) {
        trained = train_vocab(corpus, c.vocab_size);
    } else {
        trained.vocab = Vocabulary::load(vocab_path);
        trained.reached_target = trained.vocab.size() >= c.vocab_size;
    }
    trained.vocab.save(at(dir, "vocab.txt"));

    std::vector<nlohmann::json> rows;
    std::map<std::string, int> next_index;
    std::size_t longest = 0;
    for (const auto& s : snapshots) {
        for (auto piece : split_by_max_len(s, trained.vocab, c.max_len)) {
            piece.snapshot_index = next_index[piece.patient_id]++;
            const TokenSequence seq = encode(piece.descriptions(), trained.vocab, c.max_len);
            longest = std::max(longest, seq.length);
            nlohmann::json j = io::to_json(piece);
            j["token_ids"] = std::vector<int>(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.length));
            rows.push_back(std::move(j));
        }
    }
    io::write_jsonl(at(dir, "sequences.jsonl"), rows);
    write_json(at(dir, "tokenize_summary.json"), {{"vocab_size", trained.vocab.size()},
                                                  {"target_size", c.vocab_size},
                                                  {"reached_target", trained.reached_target},
                                                  {"merges", trained.merges},
                                                  {"sequences", rows.size()},
                                                  {"longest_sequence", longest}});
    return {"vocab.txt", "sequences.jsonl", "tokenize_summary.json"};
}

inline std::vector<int> case_labels(const Sequences& seq) {
    std::vector<int> labels;
    for (const auto& s : seq.snapshots) {
        labels.push_back(s.label == Label::Case ? 1 : 0);
    }
    return labels;
}

inline nlohmann::json metrics_json(const BinaryMetrics& bm) {
    return {{"recall", bm.recall},
            {"precision", bm.precision},
            {"tp", bm.true_positive},
            {"fp", bm.false_positive},
            {"fn", bm.false_negative},
            {"tn", bm.true_negative}};
}

/// One case/control classifier per fold: train on three folds, validate on fold i, test on fold (i+1) mod k.
inline std::vector<std::string> classify(const RunConfig& c, const std::string& dir) {
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    const EmbeddingMatrix emb = ingest_embeddings(at(dir, "embeddings.csv"), seq.keys(), false);
    const FoldAssignment folds = FoldAssignment::from_json(read_json(at(dir, "folds.json")));
    const std::vector<int> labels = case_labels(seq);
    std::vector<std::string> out;
    nlohmann::json models = nlohmann::json::array();
    double recall = 0.0;
    double precision = 0.0;
    for (int model = 0; model < folds.k(); ++model) {
        std::vector<Eigen::Index> rows[3];
        for (std::size_t i = 0; i < seq.snapshots.size(); ++i) {
            const int f = folds.fold_of(seq.snapshots[i].patient_id);
            const int part = f == model ? 1 : f == (model + 1) % folds.k() ? 2 : 0;
            rows[part].push_back(static_cast<Eigen::Index>(i));
        }
        Eigen::MatrixXd x[3];
        std::vector<int> y[3];
        for (int part = 0; part < 3; ++part) {
            x[part].resize(static_cast<Eigen::Index>(rows[part].size()), emb.values.cols());
            for (std::size_t r = 0; r < rows[part].size(); ++r) {
                x[part].row(static_cast<Eigen::Index>(r)) = emb.values.row(rows[part][r]);
                y[part].push_back(labels[static_cast<std::size_t>(rows[part][r])]);
            }
        }
        ClassifierConfig cc = c.classifier;
        cc.seed = derive_seed(c.seed, 0x500ULL + static_cast<std::uint64_t>(model));
        const ClassifierModel m = train_classifier(x[0], y[0], x[1], y[1], cc);
        const BinaryMetrics bm = evaluate(m, x[2], y[2]);
        recall += bm.recall;
        precision += bm.precision;
        nlohmann::json entry = metrics_json(bm);
        entry["model"] = model;
        entry["validation_fold"] = model;
        entry["test_fold"] = (model + 1) % folds.k();
        models.push_back(std::move(entry));
        const std::string file = "classifier_model_" + std::to_string(model) + ".json";
        write_json(at(dir, file), m.to_json());
        out.push_back(file);
    }
    write_json(at(dir, "classifier_metrics.json"),
               {{"models", models}, {"mean_recall", recall / folds.k()}, {"mean_precision", precision / folds.k()}});
    out.push_back("classifier_metrics.json");
    return out;
}

/// Scores a saved classifier on every embedded snapshot of `dir`.
inline std::vector<std::string> evaluate_classifier(const RunConfig& c, const std::string& dir, const std::string& model_path) {
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    const EmbeddingMatrix emb = ingest_embeddings(at(dir, "embeddings.csv"), seq.keys(), false);
    ClassifierModel m;
    try {
        m = ClassifierModel::from_json(read_json(model_path));
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(model_path + ": " + ex.what());
    }
    if (static_cast<std::size_t>(m.weights.rows()) != emb.dim()) {
        throw DataError(model_path + ": model dimension " + std::to_string(m.weights.rows()) + " does not match embeddings " +
                        std::to_string(emb.dim()));
    }
    nlohmann::json j = metrics_json(evaluate(m, emb.values, case_labels(seq)));
    j["snapshots"] = seq.snapshots.size();
    write_json(at(dir, "classifier_eval.json"), j);
    return {"classifier_eval.json"};
}

/// Embeds every sequence (baseline or ingested) and optionally runs the fold classifiers.
inline std::vector<std::string> embed(const RunConfig& c, const std::string& dir) {
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    EmbeddingMatrix emb;
    if (c.embed_mode == "ingest") {
        emb = ingest_embeddings(c.embeddings_path, seq.keys(), c.normalize_ingested);
    } else {
        BaselineConfig bc = c.baseline;
        bc.seed = derive_seed(c.seed, "embed");
        emb = embed_baseline(seq.tokens, seq.keys(), bc);
    }
    write_embeddings(at(dir, "embeddings.csv"), emb);
    std::vector<std::string> out{"embeddings.csv"};
    if (c.classify) {
        const auto more = classify(c, dir);
        out.insert(out.end(), more.begin(), more.end());
    }
    return out;
}

/// Rows of `keys` whose snapshot passes the label filter.
inline std::vector<std::size_t> select_rows(const Sequences& seq, bool cases_only) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < seq.snapshots.size(); ++i) {
        if (!cases_only || seq.snapshots[i].label == Label::Case) {
            rows.push_back(i);
        }
    }
    return rows;
}

/// 2D reduction of the (case) embeddings, plus the hyperparameter sweep when enabled.
inline std::vector<std::string> reduce_stage(const RunConfig& c, const std::string& dir) {
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    const EmbeddingMatrix all = ingest_embeddings(at(dir, "embeddings.csv"), seq.keys(), false);
    const auto rows = select_rows(seq, c.reduce_cases_only);
    if (rows.size() <= c.reduce.n_neighbors) {
        throw DataError("reduce: " + std::to_string(rows.size()) + " snapshots is too few for n_neighbors " + std::to_string(c.reduce.n_neighbors));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), all.values.cols());
    std::vector<SnapshotKey> keys;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = all.values.row(static_cast<Eigen::Index>(rows[r]));
        keys.push_back(all.keys[rows[r]]);
    }
    ReduceConfig rc = c.reduce;
    rc.seed = derive_seed(c.seed, "reduce");
    const Reduction red = reduce(x, rc);
    const std::string primary = combo_tag(rc.n_neighbors, rc.min_dist);
    write_reduced(at(dir, "reduced.csv"), to_points(keys, red.layout, primary));
    nlohmann::json summary{{"points", rows.size()},
                           {"combo", primary},
                           {"a", red.a},
                           {"b", red.b},
                           {"max_smooth_residual", red.max_smooth_residual},
                           {"degenerate_points", red.degenerate_points}};
    std::vector<std::string> out{"reduced.csv"};
    if (c.sweep) {
        std::vector<ReducedPoint> points;
        nlohmann::json combos = nlohmann::json::array();
        for (const auto& entry : sweep(x, c.sweep_n_neighbors, c.sweep_min_dist, rc)) {
            auto p = to_points(keys, entry.layout, entry.tag);
            points.insert(points.end(), p.begin(), p.end());
            combos.push_back(entry.tag);
        }
        write_reduced(at(dir, "reduced_sweep.csv"), points);
        summary["sweep_combos"] = combos;
        out.push_back("reduced_sweep.csv");
    }
    write_json(at(dir, "reduce_summary.json"), summary);
    out.push_back("reduce_summary.json");
    return out;
}

inline ThemeTable read_themes(const std::string& path) {
    const csv::Table t = csv::read(path);
    const std::size_t m = t.column("marker");
    const std::size_t th = t.column("theme");
    ThemeTable out;
    for (const auto& row : t.rows) {
        out[row[m]] = row[th];
    }
    return out;
}

inline ThemeTable themes_for(const RunConfig& c) { return c.themes_path.empty() ? default_theme_table() : read_themes(c.themes_path); }

/// Point-biserial correlation of every marker with both reduced coordinates, ranked by L2 norm.
inline std::vector<std::string> interpret(const RunConfig& c, const std::string& dir) {
    const auto records = io::read_records(at(dir, "records.jsonl"));
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    std::map<SnapshotKey, std::pair<double, double>> coords;
    for (const auto& p : read_reduced(at(dir, "reduced.csv"))) {
        coords[{p.patient_id, p.snapshot_index}] = {p.u1, p.u2};
    }
    std::vector<Snapshot> selected;
    std::vector<double> u1;
    std::vector<double> u2;
    for (const auto& s : seq.snapshots) {
        const auto it = coords.find({s.patient_id, s.snapshot_index});
        if (it == coords.end() || (c.interpret_cases_only && s.label != Label::Case)) {
            continue;
        }
        selected.push_back(s);
        u1.push_back(it->second.first);
        u2.push_back(it->second.second);
    }
    if (selected.empty()) {
        throw DataError("interpret: no reduced snapshots match the label filter");
    }
    const MarkerMatrix m = build_marker_matrix(records, selected, MarkerMapping{});
    const CorrelationResult res = correlate(m, u1, u2, c.correlation_mode);
    auto ranked = l2_rank(res.records);
    if (!c.synonyms_path.empty()) {
        ranked = dedup_synonyms(std::move(ranked), read_synonym_groups(c.synonyms_path));
    }
    ranked = assign_themes(l2_rank(std::move(ranked), c.top_k), themes_for(c));
    write_markers(at(dir, "markers.csv"), m);
    write_correlations(at(dir, "correlations.csv"), ranked);
    write_json(at(dir, "interpret_summary.json"), {{"snapshots", selected.size()},
                                                   {"markers", m.markers.size()},
                                                   {"skipped_markers", res.skipped},
                                                   {"unmapped_codes", m.unmapped_codes},
                                                   {"reported", ranked.size()}});
    return {"markers.csv", "correlations.csv", "interpret_summary.json"};
}

struct AlignedSet {
    std::vector<AlignedTrajectory> aligned;
    std::vector<Trajectory> trajectories; ///< parallel to aligned
    std::size_t patients = 0;
    std::size_t too_few_samples = 0;
    std::size_t too_few_points = 0;
};

/// Case trajectories from reduced points of one combo, aligned on the grid.
inline AlignedSet align_cases(const RunConfig& c, const Sequences& seq, std::span<const ReducedPoint> points) {
    std::map<SnapshotKey, const Snapshot*> by_key;
    for (const auto& s : seq.snapshots) {
        by_key[{s.patient_id, s.snapshot_index}] = &s;
    }
    std::vector<TrajectoryInput> inputs;
    for (const auto& p : points) {
        const auto it = by_key.find({p.patient_id, p.snapshot_index});
        if (it == by_key.end()) {
            throw DataError("cluster: reduced point " + p.patient_id + "/" + std::to_string(p.snapshot_index) + " has no sequence");
        }
        if (it->second->label == Label::Case) {
            inputs.push_back({p.patient_id, it->second->window_index, it->second->mean_time_to_diagnosis, p.u1, p.u2});
        }
    }
    const TrajectoryBuild built = build_trajectories(inputs, c.min_samples);
    AlignedSet out;
    out.patients = built.trajectories.size() + built.excluded.size();
    out.too_few_samples = built.excluded.size();
    for (const auto& t : built.trajectories) {
        if (auto a = interpolate(t, c.grid, c.min_points)) {
            out.aligned.push_back(std::move(*a));
            out.trajectories.push_back(t);
        } else {
            ++out.too_few_points;
        }
    }
    return out;
}

inline KMeansConfig kmeans_config(const RunConfig& c) {
    KMeansConfig kc;
    kc.k = c.k;
    kc.max_iterations = c.max_iterations;
    kc.dba_iterations = c.dba_iterations;
    kc.rule = c.rule;
    return kc;
}

inline std::vector<Series> series_of(const AlignedSet& set) {
    std::vector<Series> out;
    for (const auto& a : set.aligned) {
        out.push_back(a.values);
    }
    return out;
}

inline Labeling cluster_labels(const RunConfig& c, const AlignedSet& set) {
    const auto series = series_of(set);
    if (series.size() < c.k) {
        throw DataError("cluster: " + std::to_string(series.size()) + " aligned trajectories for k = " + std::to_string(c.k));
    }
    const ClusterModel m = best_of_seeds(series, kmeans_config(c), c.seeds, derive_seed(c.seed, "cluster"));
    Labeling out;
    for (std::size_t i = 0; i < series.size(); ++i) {
        out[set.aligned[i].patient_id] = m.assignments[i];
    }
    return out;
}

inline nlohmann::json trajectory_json(const Trajectory& t, const AlignedTrajectory& a, int cluster) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : t.samples) {
        samples.push_back({s.t, s.u1, s.u2});
    }
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : a.values) {
        values.push_back({v[0], v[1]});
    }
    return {{"patient_id", t.patient_id}, {"cluster", cluster}, {"samples", samples}, {"grid", a.grid}, {"values", values}};
}

inline std::vector<AlignedTrajectory> read_trajectories(const std::string& path) {
    std::vector<AlignedTrajectory> out;
    for (const auto& j : io::read_jsonl(path)) {
        try {
            AlignedTrajectory a;
            a.patient_id = j.at("patient_id").get<std::string>();
            a.grid = j.at("grid").get<std::vector<double>>();
            for (const auto& v : j.at("values")) {
                a.values.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            }
            if (a.values.size() != a.grid.size()) {
                throw DataError(path + ": ragged trajectory for " + a.patient_id);
            }
            out.push_back(std::move(a));
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(path + ": " + ex.what());
        }
    }
    return out;
}

/// Temporal clustering of case trajectories, the WCSS elbow sweep and cross-combo robustness.
inline std::vector<std::string> cluster(const RunConfig& c, const std::string& dir) {
    const Sequences seq = read_sequences(at(dir, "sequences.jsonl"), c.max_len);
    const auto points = read_reduced(at(dir, "reduced.csv"));
    const AlignedSet set = align_cases(c, seq, points);
    const auto series = series_of(set);
    if (series.size() < c.k) {
        throw DataError("cluster: " + std::to_string(series.size()) + " aligned trajectories for k = " + std::to_string(c.k));
    }
    const std::uint64_t base_seed = derive_seed(c.seed, "cluster");
    const ClusterModel model = best_of_seeds(series, kmeans_config(c), c.seeds, base_seed);
    Labeling labels;
    std::vector<nlohmann::json> rows;
    for (std::size_t i = 0; i < series.size(); ++i) {
        labels[set.aligned[i].patient_id] = model.assignments[i];
        rows.push_back(trajectory_json(set.trajectories[i], set.aligned[i], model.assignments[i]));
    }
    io::write_jsonl(at(dir, "trajectories.jsonl"), rows);
    write_clusters(at(dir, "clusters.csv"), labels);
    std::vector<std::string> out{"trajectories.jsonl", "clusters.csv"};

    nlohmann::json summary{{"case_patients", set.patients},
                           {"excluded_few_samples", set.too_few_samples},
                           {"excluded_grid_coverage", set.too_few_points},
                           {"clustered", series.size()},
                           {"k", c.k},
                           {"wcss", model.wcss},
                           {"iterations", model.iterations},
                           {"wcss_history", model.wcss_history}};
    if (c.elbow && series.size() >= c.k_min + 2) {
        const WcssSweep sw = wcss_sweep(series, c.k_min, c.k_max, c.seeds, base_seed, kmeans_config(c));
        write_wcss(at(dir, "wcss.csv"), sw);
        summary["elbow_k"] = sw.elbow;
        summary["best_wcss"] = sw.best;
        summary["median_wcss"] = sw.median;
        out.push_back("wcss.csv");
    }
    if (c.sweep) {
        const auto swept = read_reduced(at(dir, "reduced_sweep.csv"));
        std::map<std::string, std::vector<ReducedPoint>> by_combo;
        for (const auto& p : swept) {
            by_combo[p.combo].push_back(p);
        }
        std::map<std::string, Labeling> labelings;
        for (const auto& [combo, pts] : by_combo) {
            labelings[combo] = cluster_labels(c, align_cases(c, seq, pts));
        }
        const RobustnessReport r = robustness(labelings);
        write_jaccard(at(dir, "jaccard.csv"), r);
        write_node_matrix(at(dir, "jaccard_matrix.csv"), r.nodes, r.jaccard_matrix);
        write_node_matrix(at(dir, "overlap_matrix.csv"), r.nodes, r.overlap_matrix);
        out.insert(out.end(), {"jaccard.csv", "jaccard_matrix.csv", "overlap_matrix.csv"});
    }
    write_json(at(dir, "cluster_summary.json"), summary);
    out.push_back("cluster_summary.json");
    return out;
}

/// Cluster means over time, theme prevalence and demographics.
inline std::vector<std::string> report(const RunConfig& c, const std::string& dir) {
    const Labeling clusters = read_clusters(at(dir, "clusters.csv"));
    const auto aligned = read_trajectories(at(dir, "trajectories.jsonl"));
    const auto records = io::read_records(at(dir, "records.jsonl"));
    write_cluster_means(at(dir, "cluster_means.csv"), emit_cluster_means(clusters, aligned));
    const auto markers = timed_markers(records, MarkerMapping{});
    write_prevalence(at(dir, "prevalence.csv"), theme_prevalence(clusters, markers, themes_for(c), c.grid, c.prevalence));
    write_demographics(at(dir, "demographics.csv"), demographics_table(clusters, records));
    return {"cluster_means.csv", "prevalence.csv", "demographics.csv"};
}

} // namespace stage

struct StageRecord {
    std::string stage;
    std::vector<std::string> outputs;
};

struct RunResult {
    std::string output_dir;
    std::vector<StageRecord> stages;
    nlohmann::json manifest;
};

/// Runs `body`, prefixing any error with the stage name while keeping its category.
template <typename Body>
auto run_stage(const std::string& name, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& ex) {
        throw ConfigError("stage " + name + ": " + ex.what());
    } catch (const DataError& ex) {
        throw DataError("stage " + name + ": " + ex.what());
    } catch (const std::exception& ex) {
        throw Error("stage " + name + ": " + ex.what());
    }
}

inline nlohmann::json file_entries(const std::string& dir, const std::vector<std::string>& files) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : files) {
        out.push_back({{"file", f}, {"sha256", sha256_file(stage::at(dir, f))}});
    }
    return out;
}

/**
 * Runs the enabled stages in order, cohort through report, inside
 * `config.output_dir`. Writes config.json (the resolved configuration) and
 * manifest.json (SHA-256 of every artifact, by stage, with relative names).
 */
inline RunResult run_pipeline(RunConfig config) {
    config.validate();
    const std::string dir = config.output_dir;
    std::filesystem::create_directories(dir);

    std::vector<std::string> inputs;
    std::string input_dir = dir;
    if (config.synth) {
        const std::string synth_dir = stage::at(dir, "input");
        run_stage("synth", [&] {
            write_cohort(synth_dir, generate_cohort(bundled_profile_t2d(), config.synth_patients, derive_seed(config.seed, "synth")));
            return 0;
        });
        config.events = stage::at(synth_dir, "events.jsonl");
        config.patients = stage::at(synth_dir, "patients.jsonl");
        if (config.themes_path.empty()) {
            config.themes_path = stage::at(synth_dir, "themes.csv");
        }
        input_dir = synth_dir;
        inputs = {"input/events.jsonl", "input/patients.jsonl", "input/ground_truth.json", "input/themes.csv"};
    }
    stage::write_json(stage::at(dir, "config.json"), config.to_json());

    RunResult result;
    result.output_dir = dir;
    using StageFn = std::function<std::vector<std::string>()>;
    const std::vector<std::pair<std::string, StageFn>> plan{
        {"cohort", [&] { return stage::cohort(config, config.events, config.patients, dir); }},
        {"tokenize", [&] { return stage::tokenize(config, dir); }},
        {"embed", [&] { return stage::embed(config, dir); }},
        {"reduce", [&] { return stage::reduce_stage(config, dir); }},
        {"interpret", [&] { return stage::interpret(config, dir); }},
        {"cluster", [&] { return stage::cluster(config, dir); }},
        {"report", [&] { return stage::report(config, dir); }},
    };
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& [name, fn] : plan) {
        if (!config.enabled(name)) {
            continue;
        }
        auto outputs = run_stage(name, fn);
        stages.push_back({{"stage", name}, {"outputs", file_entries(dir, outputs)}});
        result.stages.push_back({name, std::move(outputs)});
    }
    result.manifest = {{"stages", stages}, {"inputs", file_entries(dir, inputs)}};
    stage::write_json(stage::at(dir, "manifest.json"), result.manifest);
    return result;
}

} // namespace trajlens
