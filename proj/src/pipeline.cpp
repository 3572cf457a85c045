#include "rhedge/pipeline.hpp"

#include "rhedge/batch_io.hpp"
#include "rhedge/checkpoint.hpp"
#include "rhedge/evaluation.hpp"
#include "rhedge/numeric.hpp"
#include "rhedge/training.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>

namespace rhedge {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSeedTrain = 1, kSeedValidation = 2, kSeedTest = 3, kSeedOod = 4;

struct Stage {
    RunManifest& manifest;
    std::filesystem::path root;

    void log(const std::string& line) { manifest.stage_log.push_back(line); }
    void artifact(const std::filesystem::path& p) {
        manifest.artifacts[std::filesystem::relative(p, root).string()] = hash_file(p);
    }
};

PathBatch dataset_stage(const ExperimentConfig& config, Stage& stage, const char* name,
                        std::size_t n, std::uint64_t role) {
    const std::uint64_t seed = derive_seed(config.master_seed, role);
    stage.manifest.seed_trail.push_back(std::string(name) + ":" + std::to_string(seed));
    const auto path = stage.root / "data" / (std::string(name) + ".rhpb");
    std::filesystem::create_directories(path.parent_path());

    json sidecar = {{"config_hash", stage.manifest.config_hash},
                    {"seed", seed},
                    {"n", n},
                    {"role", name}};
    const std::string sidecar_text = sidecar.dump(2);

    if (std::filesystem::exists(path)) {
        const std::string existing = load_batch_sidecar(path);
        if (!existing.empty() && json::parse(existing) == sidecar) {
            stage.log(std::string("data/") + name + ": reused");
            stage.artifact(path);
            return load_path_batch(path);
        }
    }
    PathBatch batch = simulate(config.model, n, seed, config.gad_interval_mode);
    save_path_batch(batch, path, sidecar_text);
    stage.log(std::string("data/") + name + ": simulated");
    stage.artifact(path);
    return batch;
}

std::string checkpoint_manifest(const ExperimentConfig& config, const char* phase) {
    json j = {{"config", json::parse(serialize_config(config))},
              {"config_hash", config_hash(config)},
              {"phase", phase},
              {"tool_version", kToolVersion}};
    return j.dump(2);
}

/// Load a checkpoint when its sidecar matches this config, else retrain.
HedgeNetwork strategy_stage(const ExperimentConfig& config, Stage& stage, const char* name,
                            bool adversarial, const PathBatch& train_data,
                            const PathBatch* validation) {
    const auto path = stage.root / "checkpoints" / (std::string(name) + ".rhnn");
    std::filesystem::create_directories(path.parent_path());
    const std::string wanted = checkpoint_manifest(config, name);
    if (std::filesystem::exists(path) && load_checkpoint_manifest(path) == wanted + "\n") {
        stage.log(std::string("checkpoints/") + name + ": reused");
        stage.artifact(path);
        return load_checkpoint(path).net;
    }
    TrainConfig tc = make_train_config(config);
    TrainedStrategy s =
        adversarial ? train_adversarial(tc, train_data, validation)
                    : train_clean(tc, train_data, validation);
    save_checkpoint(s.net, &s.optimizer, path, wanted);
    stage.log(std::string("checkpoints/") + name + (adversarial ? ": adversarial" : ": clean"));
    stage.artifact(path);
    return std::move(s.net);
}

} // namespace

RunManifest run_pipeline(const ExperimentConfig& config_in,
                         const std::filesystem::path& output_override) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig config = config_in;
    if (!output_override.empty()) config.output_dir = output_override.string();

    RunManifest manifest;
    manifest.config_hash = config_hash(config);
    manifest.resolved_config_json = serialize_config(config);

    Stage stage{manifest, std::filesystem::path(config.output_dir)};
    std::filesystem::create_directories(stage.root);

    // Data.
    const PathBatch train_data = dataset_stage(config, stage, "train", config.n_train, kSeedTrain);
    const PathBatch validation =
        dataset_stage(config, stage, "validation", config.n_validation, kSeedValidation);
    const PathBatch test = dataset_stage(config, stage, "test", config.n_test, kSeedTest);

    // Strategies.
    HedgeNetwork clean_net;
    if (!config.existing_checkpoint.empty()) {
        clean_net = load_checkpoint(config.existing_checkpoint).net;
        manifest.inputs[config.existing_checkpoint] = hash_file(config.existing_checkpoint);
        stage.log("train: skipped (existing checkpoint)");
    } else {
        clean_net = strategy_stage(config, stage, "clean", false, train_data, &validation);
    }

    std::optional<HedgeNetwork> robust_net;
    if (!config.search.alpha_grid.empty() && !config.search.delta_grid.empty()) {
        TrainConfig tc = make_train_config(config);
        SearchResult search = hyperparam_search(tc, config.search.alpha_grid,
                                                config.search.delta_grid,
                                                slice_batch(train_data, 0, train_data.n_samples),
                                                slice_batch(validation, 0,
                                                            std::min(config.n_train,
                                                                     validation.n_samples)));
        robust_net = std::move(search.strategy.net);
        const auto path = stage.root / "checkpoints" / "robust.rhnn";
        std::filesystem::create_directories(path.parent_path());
        save_checkpoint(*robust_net, nullptr, path, checkpoint_manifest(config, "robust"));
        stage.artifact(path);
        {
            std::ofstream os(stage.root / "report" / "search.csv");
            std::filesystem::create_directories(stage.root / "report");
            os.precision(17);
            os << "alpha,delta,validation_risk,failed\n";
            for (const auto& row : search.table)
                os << row.alpha << "," << row.delta << "," << row.validation_risk << ","
                   << (row.failed ? 1 : 0) << "\n";
        }
        stage.log("search: best alpha=" + std::to_string(search.best_alpha) +
                  " delta=" + std::to_string(search.best_delta));
    } else if (config.adversarial_epochs > 0) {
        robust_net = strategy_stage(config, stage, "robust", true, train_data, &validation);
    }

    // Attack curves plus distribution diagnostics on the test set.
    EvalReport report;
    const std::string chash = manifest.config_hash;
    struct Labeled {
        std::string label;
        const HedgeNetwork* net;
    };
    std::vector<Labeled> nets{{"clean", &clean_net}};
    if (robust_net) nets.push_back({"robust", &*robust_net});

    for (const Labeled& entry : nets) {
        for (const std::string& method : config.evaluation.methods) {
            for (const std::string& tracks : config.evaluation.attack_tracks) {
                const double clean_risk =
                    evaluate_strategy(*entry.net, test, config.payoff, config.cost,
                                      config.measure);
                for (double delta : config.evaluation.delta_grid) {
                    if (delta == 0.0) {
                        report.attack_curve.push_back({entry.label + "-" + method, tracks, 0.0,
                                                       clean_risk, chash});
                        continue;
                    }
                    AttackSpec spec = make_attack_spec(config, method, tracks);
                    spec.radius = delta;
                    spec.step = 0.0;
                    const PerturbedBatch attacked = run_attack(
                        *entry.net, test, config.payoff, config.cost, config.measure, spec);
                    const double risk = evaluate_strategy(*entry.net, attacked.batch,
                                                          config.payoff, config.cost,
                                                          config.measure);
                    report.attack_curve.push_back(
                        {entry.label + "-" + method, tracks, delta, risk, chash});
                    if (entry.label == "clean" && method == config.evaluation.methods.front()) {
                        const auto [dist, base] =
                            covariance_frobenius(test, attacked.batch, "S");
                        report.covariance.push_back({method, tracks, delta, dist, base, chash});
                        const auto diffs =
                            acf_difference(test, attacked.batch, "S",
                                           config.evaluation.acf_max_lag);
                        for (int lag = 0; lag < static_cast<int>(diffs.size()); ++lag)
                            report.acf.push_back({method, tracks, delta, lag,
                                                  diffs[static_cast<std::size_t>(lag)], chash});
                    }
                }
            }
        }
    }

    // Out-of-sample partitions.
    if (!config.evaluation.oos_partition_sizes.empty()) {
        std::vector<PartitionGroup> groups;
        std::vector<std::vector<HedgeNetwork>> owned;
        for (std::size_t n : config.evaluation.oos_partition_sizes) {
            const auto parts = partition_dataset(train_data, n);
            std::vector<HedgeNetwork> clean_nets, robust_nets;
            for (const PathBatch& part : parts) {
                TrainConfig tc = make_train_config(config);
                clean_nets.push_back(train_clean(tc, part).net);
                if (config.adversarial_epochs > 0)
                    robust_nets.push_back(train_adversarial(tc, part).net);
            }
            owned.push_back(std::move(clean_nets));
            PartitionGroup g{"clean", n, {}};
            for (const auto& net : owned.back()) g.nets.push_back(&net);
            groups.push_back(std::move(g));
            if (!robust_nets.empty()) {
                owned.push_back(std::move(robust_nets));
                PartitionGroup r{"robust", n, {}};
                for (const auto& net : owned.back()) r.nets.push_back(&net);
                groups.push_back(std::move(r));
            }
        }
        report.merge(
            oos_report(groups, test, config.payoff, config.cost, config.measure, chash));
        stage.log("oos: " + std::to_string(groups.size()) + " groups");
    }

    // Out-of-distribution pools.
    if (config.evaluation.ood.n_specs > 0) {
        const std::uint64_t seed = derive_seed(config.master_seed, kSeedOod);
        manifest.seed_trail.push_back("ood:" + std::to_string(seed));
        const auto specs = perturb_params_ood(config.model, config.evaluation.ood.n_specs,
                                              config.evaluation.ood.lo, config.evaluation.ood.hi,
                                              seed);
        std::vector<NamedStrategy> strategies{{"clean", &clean_net}};
        if (robust_net) strategies.push_back({"robust", &*robust_net});
        report.merge(ood_report(strategies, specs, config.evaluation.ood.paths_per_spec, seed,
                                config.payoff, config.cost, config.measure, chash));
        stage.log("ood: " + std::to_string(specs.size()) + " specs");
    }

    report.validate();
    const auto report_dir = stage.root / "report";
    report.write_csv(report_dir);
    {
        std::ofstream os(report_dir / "report.json");
        os << report.to_json() << "\n";
    }
    for (const auto& entry : std::filesystem::directory_iterator(report_dir))
        if (entry.is_regular_file()) stage.artifact(entry.path());

    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(manifest, stage.root / "manifest.json");
    return manifest;
}

} // namespace rhedge
