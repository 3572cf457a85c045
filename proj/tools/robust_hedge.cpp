#include "rhedge/batch_io.hpp"
#include "rhedge/checkpoint.hpp"
#include "rhedge/config.hpp"
#include "rhedge/csv_import.hpp"
#include "rhedge/evaluation.hpp"
#include "rhedge/manifest.hpp"
#include "rhedge/pipeline.hpp"
#include "rhedge/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>

namespace {

using namespace rhedge;

ExperimentConfig config_for_checkpoint(const std::string& checkpoint,
                                       const std::string& config_path) {
    if (!config_path.empty()) return load_config(config_path);
    const std::string manifest = load_checkpoint_manifest(checkpoint);
    if (manifest.empty())
        throw std::runtime_error("no --config given and checkpoint has no manifest sidecar");
    const auto j = nlohmann::json::parse(manifest);
    if (!j.contains("config"))
        throw std::runtime_error("checkpoint manifest does not embed a config; pass --config");
    return parse_config(j["config"].dump());
}

std::string checkpoint_sidecar(const ExperimentConfig& config, const char* phase) {
    nlohmann::json j = {{"config", nlohmann::json::parse(serialize_config(config))},
                        {"config_hash", config_hash(config)},
                        {"phase", phase},
                        {"tool_version", kToolVersion}};
    return j.dump(2);
}

void write_trace_csv(const PerturbedBatch& result, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write trace file " + path);
    os.precision(17);
    os << "iteration,loss,achieved_distance\n";
    for (const auto& row : result.trace)
        os << row.iteration << "," << row.loss << "," << row.distance << "\n";
}

int cmd_simulate(const std::string& model, const std::string& config_path, std::size_t n,
                 std::uint64_t seed, const std::string& out, bool interval_mode) {
    ExperimentConfig config;
    if (!config_path.empty()) {
        config = load_config(config_path);
    } else {
        nlohmann::json j = {{"model", {{"type", model}}}};
        config = parse_config(j.dump());
    }
    const std::string kind = config.model.kind() == ModelKind::BlackScholes ? "bs"
                             : config.model.kind() == ModelKind::Heston     ? "heston"
                                                                            : "gad";
    if (!model.empty() && model != kind)
        throw std::runtime_error("--model " + model + " does not match config model " + kind);

    const PathBatch batch = simulate(config.model, n, seed, interval_mode);
    nlohmann::json sidecar = {{"model", nlohmann::json::parse(serialize_config(config))["model"]},
                              {"seed", seed},
                              {"n", n},
                              {"interval_mode", interval_mode},
                              {"degenerate_steps", batch.degenerate_steps}};
    save_path_batch(batch, out, sidecar.dump(2));
    std::cout << "wrote " << out << " (" << n << " paths, " << batch.n_tracks() << " tracks, T="
              << batch.horizon_steps << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& mode, const std::string& out) {
    const ExperimentConfig config = load_config(config_path);
    const PathBatch data = load_path_batch(data_path);
    TrainConfig tc = make_train_config(config);
    TrainedStrategy s;
    if (mode == "clean") {
        s = train_clean(tc, data);
    } else if (mode == "adv") {
        if (tc.adversarial_epochs <= 0)
            throw std::runtime_error("train --mode adv needs train.adversarial_epochs > 0");
        if (!(tc.attack.radius > 0.0))
            throw std::runtime_error("train --mode adv needs attack.delta > 0");
        s = train_adversarial(tc, data);
    } else {
        throw std::runtime_error("--mode must be clean|adv");
    }
    save_checkpoint(s.net, &s.optimizer, out,
                    checkpoint_sidecar(config, mode == "clean" ? "clean" : "adversarial"));
    std::cout << "wrote " << out << " (" << s.history.size() << " epochs, final loss "
              << s.history.back().adv_loss << ")\n";
    return 0;
}

int cmd_search(const std::string& config_path, const std::string& grid_path,
               const std::string& data_path, const std::string& validation_path,
               const std::string& out_dir) {
    ExperimentConfig config = load_config(config_path);
    if (!grid_path.empty()) {
        std::ifstream is(grid_path);
        if (!is) throw std::runtime_error("cannot open grid file " + grid_path);
        const auto j = nlohmann::json::parse(is);
        config.search.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
        config.search.delta_grid = j.at("delta_grid").get<std::vector<double>>();
    }
    if (config.search.alpha_grid.empty() || config.search.delta_grid.empty())
        throw std::runtime_error("search needs alpha_grid and delta_grid (config or --grid)");

    const PathBatch data = load_path_batch(data_path);
    const PathBatch validation = load_path_batch(validation_path);
    const TrainConfig tc = make_train_config(config);
    SearchResult result = hyperparam_search(tc, config.search.alpha_grid,
                                            config.search.delta_grid, data, validation);

    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.strategy.net, &result.strategy.optimizer,
                    std::filesystem::path(out_dir) / "best.rhnn",
                    checkpoint_sidecar(config, "search-best"));
    std::ofstream os(std::filesystem::path(out_dir) / "search.csv");
    os.precision(17);
    os << "alpha,delta,validation_risk,failed,error\n";
    for (const auto& row : result.table)
        os << row.alpha << "," << row.delta << "," << row.validation_risk << ","
           << (row.failed ? 1 : 0) << "," << row.error << "\n";
    std::cout << "best alpha=" << result.best_alpha << " delta=" << result.best_delta << "\n";
    return 0;
}

int cmd_attack(const std::string& checkpoint, const std::string& data_path,
               const std::string& method, double delta, const std::string& p_text,
               const std::string& tracks, int iters, const std::string& out,
               const std::string& trace, const std::string& config_path) {
    const ExperimentConfig config = config_for_checkpoint(checkpoint, config_path);
    const HedgeNetwork net = load_checkpoint(checkpoint).net;
    const PathBatch data = load_path_batch(data_path);

    AttackSpec spec = make_attack_spec(config, method, tracks);
    spec.radius = delta;
    spec.iterations = iters;
    spec.step = 0.0;
    if (!p_text.empty()) {
        if (p_text == "inf")
            spec.wasserstein_p = std::numeric_limits<double>::infinity();
        else
            spec.wasserstein_p = std::stod(p_text);
    }

    const PerturbedBatch result =
        run_attack(net, data, config.payoff, config.cost, config.measure, spec);
    nlohmann::json sidecar = {{"attack",
                               {{"method", method},
                                {"delta", delta},
                                {"tracks", tracks},
                                {"iterations", iters},
                                {"achieved_distance", result.achieved_distance}}},
                              {"config_hash", config_hash(config)}};
    save_path_batch(result.batch, out, sidecar.dump(2));
    if (!trace.empty()) write_trace_csv(result, trace);
    std::cout << "achieved distance " << result.achieved_distance << ", final loss "
              << result.trace.back().loss << "\n";
    if (!result.warning.empty()) std::cerr << "warning: " << result.warning << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path,
                 const std::string& config_path) {
    const ExperimentConfig config = config_for_checkpoint(checkpoint, config_path);
    const HedgeNetwork net = load_checkpoint(checkpoint).net;
    const PathBatch data = load_path_batch(data_path);
    const double risk = evaluate_strategy(net, data, config.payoff, config.cost, config.measure);
    std::cout.precision(17);
    std::cout << risk << "\n";
    return 0;
}

int cmd_report(const std::string& kind, const std::string& config_path,
               const std::string& checkpoint, const std::string& data_path,
               const std::string& train_data_path, const std::string& out_dir) {
    const ExperimentConfig config = config_for_checkpoint(checkpoint, config_path);
    EvalReport report;
    const std::string chash = config_hash(config);

    if (kind == "attack-curve" || kind == "diag") {
        const HedgeNetwork net = load_checkpoint(checkpoint).net;
        const PathBatch data = load_path_batch(data_path);
        if (kind == "attack-curve") {
            std::vector<AttackSpec> specs;
            for (const auto& method : config.evaluation.methods)
                for (const auto& tracks : config.evaluation.attack_tracks)
                    specs.push_back(make_attack_spec(config, method, tracks));
            report = attack_curve(net, data, config.payoff, config.cost, config.measure,
                                  config.evaluation.delta_grid, specs, chash);
        } else {
            for (const auto& tracks : config.evaluation.attack_tracks) {
                for (double delta : config.evaluation.delta_grid) {
                    if (delta == 0.0) continue;
                    AttackSpec spec =
                        make_attack_spec(config, config.evaluation.methods.front(), tracks);
                    spec.radius = delta;
                    const PerturbedBatch attacked = run_attack(
                        net, data, config.payoff, config.cost, config.measure, spec);
                    const auto [dist, base] = covariance_frobenius(data, attacked.batch, "S");
                    report.covariance.push_back(
                        {config.evaluation.methods.front(), tracks, delta, dist, base, chash});
                    const auto diffs = acf_difference(data, attacked.batch, "S",
                                                      config.evaluation.acf_max_lag);
                    for (int lag = 0; lag < static_cast<int>(diffs.size()); ++lag)
                        report.acf.push_back({config.evaluation.methods.front(), tracks, delta,
                                              lag, diffs[static_cast<std::size_t>(lag)], chash});
                }
            }
        }
    } else if (kind == "oos") {
        const PathBatch train_data = load_path_batch(train_data_path);
        const PathBatch test = load_path_batch(data_path);
        std::vector<PartitionGroup> groups;
        std::vector<std::vector<HedgeNetwork>> owned;
        for (std::size_t n : config.evaluation.oos_partition_sizes) {
            std::vector<HedgeNetwork> clean_nets, robust_nets;
            for (const PathBatch& part : partition_dataset(train_data, n)) {
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
        report = oos_report(groups, test, config.payoff, config.cost, config.measure, chash);
    } else if (kind == "ood") {
        const HedgeNetwork net = load_checkpoint(checkpoint).net;
        const std::uint64_t seed = derive_seed(config.master_seed, 4);
        const auto specs = perturb_params_ood(config.model, config.evaluation.ood.n_specs,
                                              config.evaluation.ood.lo, config.evaluation.ood.hi,
                                              seed);
        std::vector<NamedStrategy> strategies{{"strategy", &net}};
        report = ood_report(strategies, specs, config.evaluation.ood.paths_per_spec, seed,
                            config.payoff, config.cost, config.measure, chash);
    } else {
        throw std::runtime_error("--kind must be attack-curve|oos|ood|diag");
    }

    report.validate();
    report.write_csv(out_dir);
    std::ofstream os(std::filesystem::path(out_dir) / "report.json");
    os << report.to_json() << "\n";
    std::cout << "wrote report to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep-hedging training, Wasserstein adversarial attacks and evaluation"};
    app.require_subcommand(1);

    // simulate
    std::string model, config_path, out, data_path;
    std::size_t n = 10000;
    std::uint64_t seed = 1;
    bool interval_mode = false;
    auto* sim = app.add_subcommand("simulate", "generate a path dataset");
    sim->add_option("--model", model, "bs|heston|gad")->required();
    sim->add_option("--config", config_path, "experiment config (JSON)");
    sim->add_option("--n", n, "number of paths")->required();
    sim->add_option("--seed", seed, "64-bit seed")->required();
    sim->add_option("--out", out, "output .rhpb path")->required();
    sim->add_flag("--interval-mode", interval_mode, "GAD interval sampling (ROBUST dataset)");

    // train
    std::string mode = "clean";
    auto* train = app.add_subcommand("train", "train a hedging strategy");
    train->add_option("--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--data", data_path, "training dataset (.rhpb)")->required();
    train->add_option("--mode", mode, "clean|adv");
    train->add_option("--out", out, "output checkpoint (.rhnn)")->required();

    // search
    std::string grid_path, validation_path;
    auto* search = app.add_subcommand("search", "hyperparameter grid search");
    search->add_option("--config", config_path, "experiment config (JSON)")->required();
    search->add_option("--grid", grid_path, "JSON with alpha_grid and delta_grid");
    search->add_option("--data", data_path, "training dataset")->required();
    search->add_option("--validation", validation_path, "validation dataset")->required();
    search->add_option("--out", out, "output directory")->required();

    // attack
    std::string checkpoint, method = "wbpgd", p_text, tracks = "s", trace;
    double delta = 0.1;
    int iters = 20;
    auto* attack = app.add_subcommand("attack", "perturb a dataset against a strategy");
    attack->add_option("--checkpoint", checkpoint, "strategy checkpoint")->required();
    attack->add_option("--data", data_path, "dataset to perturb")->required();
    attack->add_option("--method", method, "wpgd|wbpgd|pgd");
    attack->add_option("--delta", delta, "Wasserstein radius")->required();
    attack->add_option("--p", p_text, "Wasserstein order (number or 'inf')");
    attack->add_option("--tracks", tracks, "s|sv");
    attack->add_option("--iters", iters, "iterations");
    attack->add_option("--out", out, "perturbed dataset output")->required();
    attack->add_option("--trace", trace, "per-iteration CSV trace");
    attack->add_option("--config", config_path, "config override (else checkpoint manifest)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "risk of a strategy on a dataset");
    evaluate->add_option("--checkpoint", checkpoint, "strategy checkpoint")->required();
    evaluate->add_option("--data", data_path, "dataset")->required();
    evaluate->add_option("--config", config_path, "config override");

    // report
    std::string kind, train_data_path;
    auto* report = app.add_subcommand("report", "evaluation tables (CSV + JSON)");
    report->add_option("--kind", kind, "attack-curve|oos|ood|diag")->required();
    report->add_option("--config", config_path, "experiment config");
    report->add_option("--checkpoint", checkpoint, "strategy checkpoint");
    report->add_option("--data", data_path, "evaluation dataset");
    report->add_option("--train-data", train_data_path, "training dataset (oos)");
    report->add_option("--out", out, "output directory")->required();

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "run the full experiment");
    pipeline->add_option("--config", config_path, "experiment config (JSON)")->required();
    pipeline->add_option("--out", out, "output directory override");

    // import-csv
    std::string in_csv;
    std::size_t window = 30, column = 1;
    double scale_to = 10.0;
    auto* import_csv = app.add_subcommand("import-csv", "rolling windows from a price CSV");
    import_csv->add_option("--in", in_csv, "CSV of dated closing prices")->required();
    import_csv->add_option("--window", window, "window length (values per path)");
    import_csv->add_option("--scale-to", scale_to, "initial value of every path");
    import_csv->add_option("--column", column, "1-based price column");
    import_csv->add_option("--out", out, "output .rhpb path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return cmd_simulate(model, config_path, n, seed, out, interval_mode);
        if (train->parsed()) return cmd_train(config_path, data_path, mode, out);
        if (search->parsed())
            return cmd_search(config_path, grid_path, data_path, validation_path, out);
        if (attack->parsed())
            return cmd_attack(checkpoint, data_path, method, delta, p_text, tracks, iters, out,
                              trace, config_path);
        if (evaluate->parsed()) return cmd_evaluate(checkpoint, data_path, config_path);
        if (report->parsed())
            return cmd_report(kind, config_path, checkpoint, data_path, train_data_path, out);
        if (pipeline->parsed()) {
            const RunManifest manifest = run_pipeline(load_config(config_path), out);
            std::cout << "pipeline done: " << manifest.artifacts.size() << " artifacts, "
                      << manifest.wall_clock_seconds << " s\n";
            return 0;
        }
        if (import_csv->parsed()) {
            const PathBatch batch = import_price_csv(in_csv, window, scale_to, column);
            save_path_batch(batch, out);
            std::cout << "wrote " << out << " (" << batch.n_samples << " windows)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
