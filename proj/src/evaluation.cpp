#include "rhedge/evaluation.hpp"

#include "rhedge/numeric.hpp"
#include "rhedge/objective.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace rhedge {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string method_name(AttackMethod m) {
    switch (m) {
    case AttackMethod::Wpgd: return "wpgd";
    case AttackMethod::Wbpgd: return "wbpgd";
    case AttackMethod::PointwisePgd: return "pgd";
    }
    return "?";
}

std::string tracks_name(const std::vector<std::string>& tracks) {
    std::string out;
    for (const auto& t : tracks) out += t == "S" ? "s" : (t == "v" ? "v" : t);
    return out;
}

void check_row(double mean, double min, double max) {
    if (!std::isfinite(mean) || !std::isfinite(min) || !std::isfinite(max))
        throw std::runtime_error("EvalReport: non-finite partition statistics");
    if (!(min <= mean && mean <= max))
        throw std::runtime_error("EvalReport: partition statistics violate min <= mean <= max");
}

PartitionRow stats_row(const std::string& label, std::size_t n, std::span<const double> risks,
                       const std::string& config_hash) {
    const double mean = pairwise_mean(risks);
    double lo = risks[0], hi = risks[0];
    for (double r : risks) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    double variance = kNan;
    if (risks.size() > 1) {
        std::vector<double> sq(risks.size());
        for (std::size_t i = 0; i < risks.size(); ++i)
            sq[i] = (risks[i] - mean) * (risks[i] - mean);
        variance = pairwise_sum(sq) / static_cast<double>(risks.size() - 1);
    }
    check_row(mean, lo, hi);
    return {label, n, mean, lo, hi, variance, config_hash};
}

} // namespace

double evaluate_strategy(const HedgeNetwork& net, const PathBatch& data,
                         const PayoffSpec& payoff_spec, const CostSpec& cost,
                         const RiskMeasureSpec& measure) {
    const DeltaArray deltas = forward(net, data);
    const Eigen::VectorXd wealth =
        pnl(deltas, data, payoff_spec, cost, 0.0, net.layout.instrument_tracks);
    return risk_value(measure, std::span<const double>(wealth.data(),
                                                       static_cast<std::size_t>(wealth.size())))
        .risk;
}

void EvalReport::merge(const EvalReport& other) {
    attack_curve.insert(attack_curve.end(), other.attack_curve.begin(), other.attack_curve.end());
    oos.insert(oos.end(), other.oos.begin(), other.oos.end());
    ood.insert(ood.end(), other.ood.begin(), other.ood.end());
    covariance.insert(covariance.end(), other.covariance.begin(), other.covariance.end());
    acf.insert(acf.end(), other.acf.begin(), other.acf.end());
}

void EvalReport::validate() const {
    for (const auto& r : attack_curve)
        if (!std::isfinite(r.risk)) throw std::runtime_error("EvalReport: non-finite risk");
    for (const auto& r : oos) check_row(r.mean, r.min, r.max);
    for (const auto& r : ood) check_row(r.mean, r.min, r.max);
    for (const auto& r : covariance)
        if (!std::isfinite(r.distance) || !std::isfinite(r.base_norm))
            throw std::runtime_error("EvalReport: non-finite covariance distance");
    for (const auto& r : acf)
        if (!std::isfinite(r.mean_abs_diff))
            throw std::runtime_error("EvalReport: non-finite ACF difference");
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["attack_curve"] = nlohmann::json::array();
    for (const auto& r : attack_curve)
        j["attack_curve"].push_back({{"method", r.method},
                                     {"tracks", r.tracks},
                                     {"delta", r.delta},
                                     {"risk", r.risk},
                                     {"config_hash", r.config_hash}});
    auto partition_json = [](const std::vector<PartitionRow>& rows) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json o = {{"strategy", r.strategy}, {"n", r.n},           {"mean", r.mean},
                                {"min", r.min},           {"max", r.max},       {"config_hash", r.config_hash}};
            if (std::isfinite(r.variance)) o["variance"] = r.variance;
            a.push_back(o);
        }
        return a;
    };
    j["oos"] = partition_json(oos);
    j["ood"] = partition_json(ood);
    j["covariance"] = nlohmann::json::array();
    for (const auto& r : covariance)
        j["covariance"].push_back({{"method", r.method},
                                   {"tracks", r.tracks},
                                   {"delta", r.delta},
                                   {"distance", r.distance},
                                   {"base_norm", r.base_norm},
                                   {"config_hash", r.config_hash}});
    j["acf"] = nlohmann::json::array();
    for (const auto& r : acf)
        j["acf"].push_back({{"method", r.method},
                            {"tracks", r.tracks},
                            {"delta", r.delta},
                            {"lag", r.lag},
                            {"mean_abs_diff", r.mean_abs_diff},
                            {"config_hash", r.config_hash}});
    return j.dump(2);
}

void EvalReport::write_csv(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream os(dir / name);
        if (!os) throw std::runtime_error(std::string("EvalReport: cannot write ") + name);
        os.precision(17);
        return os;
    };
    if (!attack_curve.empty()) {
        auto os = open("attack_curve.csv");
        os << "method,tracks,delta,risk,config_hash\n";
        for (const auto& r : attack_curve)
            os << r.method << "," << r.tracks << "," << r.delta << "," << r.risk << ","
               << r.config_hash << "\n";
    }
    auto write_partition = [&](const char* name, const std::vector<PartitionRow>& rows) {
        if (rows.empty()) return;
        auto os = open(name);
        os << "strategy,n,mean,min,max,variance,config_hash\n";
        for (const auto& r : rows) {
            os << r.strategy << "," << r.n << "," << r.mean << "," << r.min << "," << r.max
               << ",";
            if (std::isfinite(r.variance)) os << r.variance;
            os << "," << r.config_hash << "\n";
        }
    };
    write_partition("oos.csv", oos);
    write_partition("ood.csv", ood);
    if (!covariance.empty()) {
        auto os = open("diag_cov.csv");
        os << "method,tracks,delta,distance,base_norm,config_hash\n";
        for (const auto& r : covariance)
            os << r.method << "," << r.tracks << "," << r.delta << "," << r.distance << ","
               << r.base_norm << "," << r.config_hash << "\n";
    }
    if (!acf.empty()) {
        auto os = open("diag_acf.csv");
        os << "method,tracks,delta,lag,mean_abs_diff,config_hash\n";
        for (const auto& r : acf)
            os << r.method << "," << r.tracks << "," << r.delta << "," << r.lag << ","
               << r.mean_abs_diff << "," << r.config_hash << "\n";
    }
}

EvalReport attack_curve(const HedgeNetwork& net, const PathBatch& data,
                        const PayoffSpec& payoff_spec, const CostSpec& cost,
                        const RiskMeasureSpec& measure, std::span<const double> delta_grid,
                        std::span<const AttackSpec> method_specs,
                        const std::string& config_hash) {
    EvalReport report;
    const double clean_risk = evaluate_strategy(net, data, payoff_spec, cost, measure);
    for (const AttackSpec& base : method_specs) {
        const std::string mname = method_name(base.method);
        const std::string tname = tracks_name(base.tracks);
        for (double delta : delta_grid) {
            if (delta == 0.0) {
                report.attack_curve.push_back({mname, tname, 0.0, clean_risk, config_hash});
                continue;
            }
            AttackSpec spec = base;
            spec.radius = delta;
            spec.step = 0.0; // keep the 4*delta/iterations default per point
            const PerturbedBatch attacked =
                run_attack(net, data, payoff_spec, cost, measure, spec);
            const double risk =
                evaluate_strategy(net, attacked.batch, payoff_spec, cost, measure);
            report.attack_curve.push_back({mname, tname, delta, risk, config_hash});
        }
    }
    return report;
}

std::pair<double, double> covariance_frobenius(const PathBatch& original,
                                               const PathBatch& perturbed,
                                               const std::string& track) {
    if (original.n_samples != perturbed.n_samples ||
        original.n_times() != perturbed.n_times())
        throw std::invalid_argument("covariance_frobenius: shape mismatch");
    if (original.n_samples < 2)
        throw std::invalid_argument("covariance_frobenius: need at least 2 samples");

    auto covariance = [&](const PathBatch& b) {
        const Eigen::MatrixXd x =
            b.track_matrix(static_cast<std::size_t>(b.require_track(track)));
        const Eigen::RowVectorXd mean = x.colwise().mean();
        const Eigen::MatrixXd centered = x.rowwise() - mean;
        return Eigen::MatrixXd(centered.transpose() * centered /
                               static_cast<double>(x.rows() - 1));
    };
    const Eigen::MatrixXd c0 = covariance(original);
    const Eigen::MatrixXd c1 = covariance(perturbed);
    return {(c1 - c0).norm(), c0.norm()};
}

double cumulative_acf(std::span<const double> path, int lag) {
    const std::size_t n = path.size();
    if (lag < 0 || static_cast<std::size_t>(lag) >= n)
        throw std::invalid_argument("cumulative_acf: lag out of range");
    std::vector<double> xs(path.begin(), path.end());
    bool constant = true;
    for (double x : xs)
        if (x != xs[0]) {
            constant = false;
            break;
        }
    if (constant)
        throw std::invalid_argument("cumulative_acf: constant path has undefined ACF");
    const double mean = pairwise_mean(xs);

    // Lag-i autocovariance term, accumulated exactly like the population
    // variance below so that the lag-0 value is 1 by construction.
    auto lag_term = [&](int i) {
        const std::size_t m = n - static_cast<std::size_t>(i);
        double s = 0.0;
        for (std::size_t t = 0; t < m; ++t)
            s += (xs[t] - mean) * (xs[t + static_cast<std::size_t>(i)] - mean);
        return s / static_cast<double>(m);
    };
    const double variance = lag_term(0); // population (divisor n)
    if (variance == 0.0)
        throw std::invalid_argument("cumulative_acf: constant path has undefined ACF");

    double acc = 0.0;
    for (int i = 0; i <= lag; ++i) acc += lag_term(i);
    return acc / variance;
}

std::vector<double> acf_difference(const PathBatch& original, const PathBatch& perturbed,
                                   const std::string& track, int max_lag) {
    if (original.n_samples != perturbed.n_samples ||
        original.n_times() != perturbed.n_times())
        throw std::invalid_argument("acf_difference: shape mismatch");
    const std::size_t o_idx = static_cast<std::size_t>(original.require_track(track));
    const std::size_t p_idx = static_cast<std::size_t>(perturbed.require_track(track));
    const std::size_t N = original.n_samples;
    const std::size_t times = original.n_times();

    std::vector<double> out(static_cast<std::size_t>(max_lag) + 1, 0.0);
    std::vector<double> orig_path(times), pert_path(times);
    std::vector<std::vector<double>> diffs(out.size(), std::vector<double>(N));
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t t = 0; t < times; ++t) {
            orig_path[t] = original.at(n, o_idx, t);
            pert_path[t] = perturbed.at(n, p_idx, t);
        }
        for (int lag = 0; lag <= max_lag; ++lag)
            diffs[static_cast<std::size_t>(lag)][n] =
                std::abs(cumulative_acf(pert_path, lag) - cumulative_acf(orig_path, lag));
    }
    for (int lag = 0; lag <= max_lag; ++lag)
        out[static_cast<std::size_t>(lag)] = pairwise_mean(diffs[static_cast<std::size_t>(lag)]);
    return out;
}

EvalReport oos_report(std::span<const PartitionGroup> groups, const PathBatch& test,
                      const PayoffSpec& payoff_spec, const CostSpec& cost,
                      const RiskMeasureSpec& measure, const std::string& config_hash) {
    EvalReport report;
    for (const PartitionGroup& g : groups) {
        if (g.nets.empty()) throw std::invalid_argument("oos_report: group without strategies");
        std::vector<double> risks;
        risks.reserve(g.nets.size());
        for (const HedgeNetwork* net : g.nets)
            risks.push_back(evaluate_strategy(*net, test, payoff_spec, cost, measure));
        report.oos.push_back(stats_row(g.strategy, g.n, risks, config_hash));
    }
    return report;
}

EvalReport ood_report(std::span<const NamedStrategy> strategies,
                      std::span<const MarketModelSpec> specs, std::size_t paths_per_spec,
                      std::uint64_t seed, const PayoffSpec& payoff_spec, const CostSpec& cost,
                      const RiskMeasureSpec& measure, const std::string& config_hash) {
    if (specs.empty()) throw std::invalid_argument("ood_report: no perturbed specs");
    std::vector<PathBatch> pools;
    pools.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        pools.push_back(simulate(specs[i], paths_per_spec, seed + i));
    std::vector<const PathBatch*> parts;
    for (const auto& p : pools) parts.push_back(&p);
    const PathBatch pool = concat_batches(parts);
    pool.validate(false); // initial columns differ across parameter draws

    EvalReport report;
    for (const NamedStrategy& s : strategies) {
        const double risk = evaluate_strategy(*s.net, pool, payoff_spec, cost, measure);
        report.ood.push_back(stats_row(s.label, pool.n_samples, std::vector<double>{risk},
                                       config_hash));
    }
    return report;
}

} // namespace rhedge
