#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trajlens/trajlens.hpp"

namespace {

using trajlens::RunConfig;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run configuration JSON providing defaults")->check(CLI::ExistingFile);
    cmd->add_option("--out", c.out, "Working directory holding stage inputs and outputs");
    cmd->add_option("--seed", c.seed, "Global seed (overrides the configuration)");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : trajlens::load_run_config(c.config);
    if (!c.out.empty()) {
        cfg.output_dir = c.out;
    }
    if (c.seed) {
        cfg.seed = *c.seed;
    }
    if (cfg.output_dir.empty()) {
        throw trajlens::ConfigError("--out (or output_dir in --config) is required");
    }
    cfg.validate_settings();
    std::filesystem::create_directories(cfg.output_dir);
    return cfg;
}

template <typename T>
void set_if(const std::optional<T>& value, T& target) {
    if (value) {
        target = *value;
    }
}

void report_outputs(const std::string& dir, const std::vector<std::string>& files) {
    for (const auto& f : files) {
        std::cout << (std::filesystem::path(dir) / f).string() << '\n';
    }
}

template <typename T>
T parse_choice(const std::string& option, const std::string& value, const std::map<std::string, T>& options) {
    const auto it = options.find(value);
    if (it == options.end()) {
        throw trajlens::ConfigError(option + ": unknown value '" + value + "'");
    }
    return it->second;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajlens: snapshot embedding, 2D reduction, marker interpretation and trajectory clustering for coded health records"};
    app.require_subcommand(1);

    Common common;
    std::function<void()> action;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with planted progression archetypes");
    std::string profile = "t2d";
    std::size_t n_patients = 400;
    add_common(synth, common);
    synth->add_option("--profile", profile, "Bundled profile")->check(CLI::IsMember({"t2d"}));
    synth->add_option("--n", n_patients, "Number of cases");
    synth->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            trajlens::run_stage("synth", [&] {
                trajlens::write_cohort(cfg.output_dir, trajlens::generate_cohort(trajlens::bundled_profile_t2d(), n_patients, cfg.seed));
                return 0;
            });
            report_outputs(cfg.output_dir, {"events.jsonl", "patients.jsonl", "ground_truth.json", "themes.csv"});
        };
    });

    auto* cohort = app.add_subcommand("cohort", "Label, match and snapshot patient records; assign folds");
    std::string events;
    std::string patients;
    std::optional<std::vector<double>> bounds;
    std::optional<std::size_t> max_len;
    std::optional<std::string> merge_scope;
    std::optional<std::vector<std::string>> case_meds;
    bool no_match = false;
    std::optional<int> folds;
    add_common(cohort, common);
    cohort->add_option("--events", events, "events.jsonl")->check(CLI::ExistingFile);
    cohort->add_option("--patients", patients, "patients.jsonl")->check(CLI::ExistingFile);
    cohort->add_option("--bounds", bounds, "Window bounds in years, e.g. --bounds=-10,0,10,20")->delimiter(',');
    cohort->add_option("--max-len", max_len, "Token cap per snapshot sequence");
    cohort->add_option("--merge-scope", merge_scope, "Visit merging: hospital or all");
    cohort->add_option("--case-medications", case_meds, "Type 2 medication codes or prefixes (PREFIX*)")->delimiter(',');
    cohort->add_flag("--no-match", no_match, "Skip control matching");
    cohort->add_option("--folds", folds, "Number of patient folds");
    cohort->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(bounds, cfg.bounds);
            set_if(max_len, cfg.max_len);
            set_if(case_meds, cfg.case_medications);
            set_if(folds, cfg.folds);
            if (merge_scope) {
                cfg.merge_scope = parse_choice<trajlens::MergeScope>(
                    "--merge-scope", *merge_scope, {{"hospital", trajlens::MergeScope::HospitalOnly}, {"all", trajlens::MergeScope::AllSources}});
            }
            if (no_match) {
                cfg.match = false;
            }
            if (!events.empty()) {
                cfg.events = events;
            }
            if (!patients.empty()) {
                cfg.patients = patients;
            }
            if (cfg.events.empty() || cfg.patients.empty()) {
                throw trajlens::ConfigError("cohort needs --events and --patients");
            }
            cfg.validate_settings();
            report_outputs(cfg.output_dir, trajlens::run_stage("cohort", [&] {
                               return trajlens::stage::cohort(cfg, cfg.events, cfg.patients, cfg.output_dir);
                           }));
        };
    });

    auto* tokenize = app.add_subcommand("tokenize", "Train a subword vocabulary and encode snapshots");
    bool train = false;
    std::string encode_vocab;
    std::optional<std::size_t> vocab_size;
    add_common(tokenize, common);
    auto* train_flag = tokenize->add_flag("--train", train, "Train a new vocabulary (default)");
    tokenize->add_option("--encode", encode_vocab, "Encode with an existing vocabulary file")->check(CLI::ExistingFile)->excludes(train_flag);
    tokenize->add_option("--vocab-size", vocab_size, "Target vocabulary size");
    tokenize->add_option("--max-len", max_len, "Token cap per snapshot sequence");
    tokenize->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(vocab_size, cfg.vocab_size);
            set_if(max_len, cfg.max_len);
            cfg.validate_settings();
            report_outputs(cfg.output_dir,
                           trajlens::run_stage("tokenize", [&] { return trajlens::stage::tokenize(cfg, cfg.output_dir, encode_vocab); }));
        };
    });

    auto* embed = app.add_subcommand("embed", "Embed encoded snapshots");
    bool baseline = false;
    std::string ingest;
    std::optional<std::size_t> dim;
    std::optional<std::size_t> window;
    bool classify_after = false;
    add_common(embed, common);
    auto* baseline_flag = embed->add_flag("--baseline", baseline, "Built-in co-occurrence embedding (default)");
    embed->add_option("--ingest", ingest, "CSV of precomputed embeddings")->check(CLI::ExistingFile)->excludes(baseline_flag);
    embed->add_option("--dim", dim, "Embedding dimension of the baseline");
    embed->add_option("--window", window, "Co-occurrence window of the baseline");
    embed->add_flag("--classify", classify_after, "Also train and test the fold classifiers");
    embed->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            if (!ingest.empty()) {
                cfg.embed_mode = "ingest";
                cfg.embeddings_path = ingest;
            } else if (baseline) {
                cfg.embed_mode = "baseline";
            }
            set_if(dim, cfg.baseline.dim);
            set_if(window, cfg.baseline.window);
            cfg.classify = cfg.classify || classify_after;
            cfg.validate_settings();
            report_outputs(cfg.output_dir, trajlens::run_stage("embed", [&] { return trajlens::stage::embed(cfg, cfg.output_dir); }));
        };
    });

    auto* classify = app.add_subcommand("classify", "Case/control classifiers on snapshot embeddings");
    bool classify_train = false;
    std::string eval_model;
    add_common(classify, common);
    auto* classify_train_flag = classify->add_flag("--train", classify_train, "Train one model per fold (default)");
    classify->add_option("--eval", eval_model, "Evaluate a saved model on every snapshot")->check(CLI::ExistingFile)->excludes(classify_train_flag);
    classify->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            report_outputs(cfg.output_dir, trajlens::run_stage("classify", [&] {
                               return eval_model.empty() ? trajlens::stage::classify(cfg, cfg.output_dir)
                                                         : trajlens::stage::evaluate_classifier(cfg, cfg.output_dir, eval_model);
                           }));
        };
    });

    auto* reduce = app.add_subcommand("reduce", "Reduce snapshot embeddings to 2D");
    std::optional<std::size_t> n_neighbors;
    std::optional<double> min_dist;
    std::optional<int> epochs;
    std::optional<std::string> init;
    std::optional<std::string> fit_on;
    bool do_sweep = false;
    add_common(reduce, common);
    reduce->add_option("--n-neighbors", n_neighbors, "Neighborhood size");
    reduce->add_option("--min-dist", min_dist, "Minimum embedded distance");
    reduce->add_option("--epochs", epochs, "Layout optimization epochs");
    reduce->add_option("--init", init, "Layout initialization: pca or random");
    reduce->add_option("--fit-on", fit_on, "Snapshots to reduce: cases or all");
    reduce->add_flag("--sweep", do_sweep, "Also run the n_neighbors x min_dist sweep");
    reduce->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(n_neighbors, cfg.reduce.n_neighbors);
            set_if(min_dist, cfg.reduce.min_dist);
            set_if(epochs, cfg.reduce.epochs);
            if (init) {
                cfg.reduce.init = parse_choice<trajlens::LayoutInit>("--init", *init, {{"pca", trajlens::LayoutInit::Pca}, {"random", trajlens::LayoutInit::Random}});
            }
            if (fit_on) {
                cfg.reduce_cases_only = parse_choice<bool>("--fit-on", *fit_on, {{"cases", true}, {"all", false}});
            }
            cfg.sweep = cfg.sweep || do_sweep;
            cfg.validate_settings();
            report_outputs(cfg.output_dir, trajlens::run_stage("reduce", [&] { return trajlens::stage::reduce_stage(cfg, cfg.output_dir); }));
        };
    });

    auto* interpret = app.add_subcommand("interpret", "Correlate clinical markers with the reduced coordinates");
    std::optional<std::size_t> top_k;
    std::optional<std::string> themes;
    std::optional<std::string> synonyms;
    std::optional<std::string> labels;
    std::optional<std::string> mode;
    add_common(interpret, common);
    interpret->add_option("--top-k", top_k, "Keep the k highest-ranked markers (0 keeps all)");
    interpret->add_option("--themes", themes, "CSV with marker,theme columns")->check(CLI::ExistingFile);
    interpret->add_option("--synonyms", synonyms, "Synonym groups, one per line, members separated by |")->check(CLI::ExistingFile);
    interpret->add_option("--labels", labels, "Snapshots to correlate: cases or all");
    interpret->add_option("--mode", mode, "pooled or per_window");
    interpret->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(top_k, cfg.top_k);
            set_if(themes, cfg.themes_path);
            set_if(synonyms, cfg.synonyms_path);
            if (labels) {
                cfg.interpret_cases_only = parse_choice<bool>("--labels", *labels, {{"cases", true}, {"all", false}});
            }
            if (mode) {
                cfg.correlation_mode = parse_choice<trajlens::CorrelationMode>(
                    "--mode", *mode, {{"pooled", trajlens::CorrelationMode::Pooled}, {"per_window", trajlens::CorrelationMode::PerWindow}});
            }
            report_outputs(cfg.output_dir, trajlens::run_stage("interpret", [&] { return trajlens::stage::interpret(cfg, cfg.output_dir); }));
        };
    });

    auto* cluster = app.add_subcommand("cluster", "Cluster case trajectories with DTW k-means");
    std::optional<std::size_t> k;
    std::optional<int> seeds;
    std::optional<std::vector<double>> grid;
    std::optional<std::string> centroid;
    bool no_elbow = false;
    bool cluster_sweep = false;
    add_common(cluster, common);
    cluster->add_option("--k", k, "Number of clusters");
    cluster->add_option("--seeds", seeds, "Restarts per k");
    cluster->add_option("--grid", grid, "Alignment grid in years, e.g. --grid=-5,0,5,10,15")->delimiter(',');
    cluster->add_option("--centroid", centroid, "Centroid update: dba or medoid");
    cluster->add_flag("--no-elbow", no_elbow, "Skip the k sweep");
    cluster->add_flag("--sweep", cluster_sweep, "Cluster every combo of reduced_sweep.csv and match clusters");
    cluster->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(k, cfg.k);
            set_if(seeds, cfg.seeds);
            set_if(grid, cfg.grid);
            if (centroid) {
                cfg.rule = parse_choice<trajlens::CentroidRule>("--centroid", *centroid, {{"dba", trajlens::CentroidRule::Dba}, {"medoid", trajlens::CentroidRule::Medoid}});
            }
            if (no_elbow) {
                cfg.elbow = false;
            }
            cfg.sweep = cluster_sweep;
            cfg.validate_settings();
            report_outputs(cfg.output_dir, trajlens::run_stage("cluster", [&] { return trajlens::stage::cluster(cfg, cfg.output_dir); }));
        };
    });

    auto* report = app.add_subcommand("report", "Cluster means, theme prevalence and demographics");
    std::optional<std::string> prevalence;
    add_common(report, common);
    report->add_option("--prevalence", prevalence, "cumulative or per_window");
    report->add_option("--themes", themes, "CSV with marker,theme columns")->check(CLI::ExistingFile);
    report->add_option("--grid", grid, "Time points in years, e.g. --grid=-5,0,5,10,15")->delimiter(',');
    report->callback([&] {
        action = [&] {
            RunConfig cfg = resolve(common);
            set_if(themes, cfg.themes_path);
            set_if(grid, cfg.grid);
            if (prevalence) {
                cfg.prevalence = parse_choice<trajlens::PrevalenceMode>(
                    "--prevalence", *prevalence, {{"cumulative", trajlens::PrevalenceMode::Cumulative}, {"per_window", trajlens::PrevalenceMode::PerWindow}});
            }
            cfg.validate_settings();
            report_outputs(cfg.output_dir, trajlens::run_stage("report", [&] { return trajlens::stage::report(cfg, cfg.output_dir); }));
        };
    });

    auto* run = app.add_subcommand("run", "Run the enabled stages end to end from a configuration");
    std::string run_config;
    std::string run_out;
    std::optional<std::uint64_t> run_seed;
    run->add_option("--config", run_config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--out", run_out, "Output directory (overrides the configuration)");
    run->add_option("--seed", run_seed, "Global seed (overrides the configuration)");
    run->callback([&] {
        action = [&] {
            RunConfig cfg = trajlens::load_run_config(run_config);
            if (!run_out.empty()) {
                cfg.output_dir = run_out;
            }
            set_if(run_seed, cfg.seed);
            const auto result = trajlens::run_pipeline(cfg);
            for (const auto& s : result.stages) {
                std::cout << s.stage << ": " << s.outputs.size() << " files\n";
            }
            std::cout << (std::filesystem::path(result.output_dir) / "manifest.json").string() << '\n';
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        action();
    } catch (const trajlens::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const trajlens::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
