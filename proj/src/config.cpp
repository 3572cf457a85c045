#include "rhedge/config.hpp"

#include "rhedge/numeric.hpp"
#include "rhedge/rng.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rhedge {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::invalid_argument("config: " + where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) fail(where, "unknown key '" + it.key() + "'");
}

double get_number(const json& obj, const std::string& where, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) fail(where, std::string(key) + " must be a number");
    return obj[key].get<double>();
}

std::uint64_t get_u64(const json& obj, const std::string& where, const char* key,
                      std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer())
        fail(where, std::string(key) + " must be an integer");
    return obj[key].get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& where, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) fail(where, std::string(key) + " must be a boolean");
    return obj[key].get<bool>();
}

std::string get_string(const json& obj, const std::string& where, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) fail(where, std::string(key) + " must be a string");
    return obj[key].get<std::string>();
}

Interval get_interval(const json& obj, const std::string& where, const char* key,
                      Interval fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj[key];
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        fail(where, std::string(key) + " must be [lo, hi]");
    return {v[0].get<double>(), v[1].get<double>()};
}

MarketModelSpec parse_model(const json& j) {
    if (!j.is_object()) fail("model", "must be an object");
    const std::string type = get_string(j, "model", "type", "");
    MarketModelSpec spec;
    if (type == "bs") {
        reject_unknown(j, "model",
                       {"type", "s0", "drift", "sigma", "maturity_years", "n_steps"});
        BsParams p;
        p.s0 = get_number(j, "model", "s0", p.s0);
        p.drift = get_number(j, "model", "drift", p.drift);
        p.sigma = get_number(j, "model", "sigma", p.sigma);
        spec.params = p;
    } else if (type == "heston") {
        reject_unknown(j, "model",
                       {"type", "s0", "v0", "mean_reversion", "long_run_var", "vol_of_vol",
                        "correlation", "drift", "maturity_years", "n_steps"});
        HestonParams p;
        p.s0 = get_number(j, "model", "s0", p.s0);
        p.v0 = get_number(j, "model", "v0", p.v0);
        p.mean_reversion = get_number(j, "model", "mean_reversion", p.mean_reversion);
        p.long_run_var = get_number(j, "model", "long_run_var", p.long_run_var);
        p.vol_of_vol = get_number(j, "model", "vol_of_vol", p.vol_of_vol);
        p.correlation = get_number(j, "model", "correlation", p.correlation);
        p.drift = get_number(j, "model", "drift", p.drift);
        spec.params = p;
    } else if (type == "gad") {
        reject_unknown(j, "model",
                       {"type", "s0", "a0", "a1", "b0", "b1", "gamma", "maturity_years",
                        "n_steps"});
        GadParams p;
        p.s0 = get_number(j, "model", "s0", p.s0);
        p.a0 = get_interval(j, "model", "a0", p.a0);
        p.a1 = get_interval(j, "model", "a1", p.a1);
        p.b0 = get_interval(j, "model", "b0", p.b0);
        p.b1 = get_interval(j, "model", "b1", p.b1);
        p.gamma = get_number(j, "model", "gamma", p.gamma);
        spec.params = p;
    } else {
        fail("model", "type must be one of bs|heston|gad");
    }
    spec.maturity_years = get_number(j, "model", "maturity_years", spec.maturity_years);
    spec.n_steps = static_cast<int>(get_number(j, "model", "n_steps", spec.n_steps));
    spec.validate();
    return spec;
}

PayoffSpec parse_payoff(const json& j) {
    if (!j.is_object()) fail("payoff", "must be an object");
    const std::string type = get_string(j, "payoff", "type", "european_call");
    if (type == "european_call") {
        reject_unknown(j, "payoff", {"type", "strike"});
        return EuropeanCall{get_number(j, "payoff", "strike", 100.0)};
    }
    if (type == "asian_put") {
        reject_unknown(j, "payoff", {"type"});
        return AsianPut{};
    }
    fail("payoff", "type must be european_call|asian_put");
}

RiskMeasureSpec parse_risk(const json& j) {
    if (!j.is_object()) fail("risk", "must be an object");
    const std::string type = get_string(j, "risk", "type", "cvar");
    if (type == "entropic") {
        reject_unknown(j, "risk", {"type", "risk_aversion"});
        return Entropic{get_number(j, "risk", "risk_aversion", 1.0)};
    }
    if (type == "cvar") {
        reject_unknown(j, "risk", {"type", "alpha"});
        return Cvar{get_number(j, "risk", "alpha", 0.5)};
    }
    fail("risk", "type must be entropic|cvar");
}

std::vector<std::string> track_labels(const std::string& short_name) {
    if (short_name == "s") return {"S"};
    if (short_name == "sv") return {"S", "v"};
    fail("attack", "tracks must be 's' or 'sv'");
}

AttackMethod parse_method(const std::string& name, const std::string& where) {
    if (name == "wpgd") return AttackMethod::Wpgd;
    if (name == "wbpgd") return AttackMethod::Wbpgd;
    if (name == "pgd") return AttackMethod::PointwisePgd;
    fail(where, "method must be wpgd|wbpgd|pgd");
}

AttackSpec parse_attack(const json& j, const MarketModelSpec& model) {
    AttackSpec spec;
    if (j.is_null()) {
        return spec;
    }
    if (!j.is_object()) fail("attack", "must be an object");
    reject_unknown(j, "attack",
                   {"method", "delta", "p", "iterations", "step", "tracks", "sv_weight",
                    "freeze_initial", "projection"});
    spec.method = parse_method(get_string(j, "attack", "method", "wbpgd"), "attack");
    spec.radius = get_number(j, "attack", "delta", 0.0);
    if (j.contains("p")) {
        if (j["p"].is_string()) {
            if (j["p"].get<std::string>() != "inf") fail("attack", "p must be a number or 'inf'");
            spec.wasserstein_p = std::numeric_limits<double>::infinity();
        } else {
            spec.wasserstein_p = j["p"].get<double>();
        }
    }
    spec.iterations = static_cast<int>(get_number(j, "attack", "iterations", 20));
    spec.step = get_number(j, "attack", "step", 0.0);
    const std::string tracks = get_string(j, "attack", "tracks", "s");
    spec.tracks = track_labels(tracks);
    if (tracks == "sv") {
        if (model.kind() != ModelKind::Heston)
            fail("attack", "SV attack requested but the variance track is absent "
                           "(model is not Heston)");
        spec.track_weights = {1.0, get_number(j, "attack", "sv_weight", 1.0)};
    } else if (j.contains("sv_weight")) {
        fail("attack", "sv_weight only applies to tracks='sv'");
    }
    spec.freeze_initial = get_bool(j, "attack", "freeze_initial", true);
    const std::string proj = get_string(j, "attack", "projection", "shrink");
    if (proj == "shrink")
        spec.projection = ProjectionMode::ShrinkOnly;
    else if (proj == "saturate")
        spec.projection = ProjectionMode::BoundarySaturating;
    else
        fail("attack", "projection must be shrink|saturate");
    spec.validate();
    return spec;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t role, std::uint64_t index) {
    return counter_bits(master, role, index, 0xC0FFEEull);
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    if (!j.is_object()) fail("root", "must be an object");
    reject_unknown(j, "root",
                   {"version", "model", "gad_interval_mode", "payoff", "cost", "risk", "network",
                    "train", "attack", "evaluation", "search", "seeds", "output_dir"});

    ExperimentConfig c;
    c.version = static_cast<int>(get_number(j, "root", "version", 1));
    if (c.version != 1) fail("root", "unsupported config version");
    if (!j.contains("model")) fail("root", "missing 'model'");
    c.model = parse_model(j["model"]);
    c.gad_interval_mode = get_bool(j, "root", "gad_interval_mode", false);
    if (c.gad_interval_mode && c.model.kind() != ModelKind::Gad)
        fail("root", "gad_interval_mode requires a GAD model");

    // Per-model defaults: entropic risk for BS/GAD, CVaR for Heston; Appendix
    // learning rates and epoch counts.
    const bool heston = c.model.kind() == ModelKind::Heston;
    c.measure = heston ? RiskMeasureSpec(Cvar{0.5}) : RiskMeasureSpec(Entropic{1.0});
    if (c.model.kind() == ModelKind::Gad)
        c.payoff = AsianPut{};
    else if (const auto* bs = std::get_if<BsParams>(&c.model.params))
        c.payoff = EuropeanCall{bs->s0};
    else
        c.payoff = EuropeanCall{c.model.heston().s0};

    if (j.contains("payoff")) c.payoff = parse_payoff(j["payoff"]);
    validate(c.payoff);
    if (j.contains("cost")) {
        reject_unknown(j["cost"], "cost", {"rate"});
        c.cost.rate = get_number(j["cost"], "cost", "rate", 0.0);
    }
    validate(c.cost);
    if (j.contains("risk")) c.measure = parse_risk(j["risk"]);
    validate(c.measure);

    if (j.contains("network")) {
        reject_unknown(j["network"], "network", {"architecture"});
        const std::string arch = get_string(j["network"], "network", "architecture", "netsim");
        if (arch == "netsim")
            c.arch = Architecture::NetSim;
        else if (arch == "netrec")
            c.arch = Architecture::NetRec;
        else
            fail("network", "architecture must be netsim|netrec");
    }

    const json train = j.contains("train") ? j["train"] : json::object();
    reject_unknown(train, "train",
                   {"n_train", "n_validation", "n_test", "clean_epochs", "adversarial_epochs",
                    "batch_size", "learning_rate", "lr_decay_factor", "lr_decay_interval",
                    "clean_weight", "checkpoint"});
    c.n_train = get_u64(train, "train", "n_train", c.n_train);
    c.n_validation = get_u64(train, "train", "n_validation", c.n_validation);
    c.n_test = get_u64(train, "train", "n_test", c.n_test);
    c.adversarial_epochs =
        static_cast<int>(get_number(train, "train", "adversarial_epochs", 0));
    const int default_clean = c.adversarial_epochs > 0 ? (heston ? 300 : 100)
                                                       : (heston ? 700 : 300);
    c.clean_epochs = static_cast<int>(get_number(train, "train", "clean_epochs", default_clean));
    c.batch_size = get_u64(train, "train", "batch_size", c.batch_size);
    c.learning_rate = get_number(train, "train", "learning_rate", heston ? 0.05 : 0.005);
    c.lr_decay_factor = get_number(train, "train", "lr_decay_factor", 0.5);
    c.lr_decay_interval = static_cast<int>(get_number(train, "train", "lr_decay_interval", 0));
    c.clean_weight = get_number(train, "train", "clean_weight", 1.0);
    c.existing_checkpoint = get_string(train, "train", "checkpoint", "");
    if (c.clean_epochs < 0 || c.adversarial_epochs < 0)
        fail("train", "epoch counts must be non-negative");
    if (c.batch_size < 2) fail("train", "batch_size must be >= 2");

    c.attack = parse_attack(j.contains("attack") ? j["attack"] : json(), c.model);

    const json eval = j.contains("evaluation") ? j["evaluation"] : json::object();
    reject_unknown(eval, "evaluation",
                   {"delta_grid", "methods", "attack_tracks", "oos_partition_sizes",
                    "acf_max_lag", "ood"});
    if (eval.contains("delta_grid")) {
        c.evaluation.delta_grid.clear();
        for (const auto& v : eval["delta_grid"]) c.evaluation.delta_grid.push_back(v.get<double>());
    }
    if (eval.contains("methods")) {
        c.evaluation.methods.clear();
        for (const auto& v : eval["methods"]) {
            const std::string m = v.get<std::string>();
            parse_method(m, "evaluation");
            c.evaluation.methods.push_back(m);
        }
    }
    if (eval.contains("attack_tracks")) {
        for (const auto& v : eval["attack_tracks"]) {
            const std::string t = v.get<std::string>();
            if (t != "s" && t != "sv") fail("evaluation", "attack_tracks entries must be s|sv");
            if (t == "sv" && c.model.kind() != ModelKind::Heston)
                fail("evaluation", "SV attack requested but the variance track is absent");
            c.evaluation.attack_tracks.push_back(t);
        }
    } else {
        c.evaluation.attack_tracks = heston ? std::vector<std::string>{"s", "sv"}
                                            : std::vector<std::string>{"s"};
    }
    if (eval.contains("oos_partition_sizes"))
        for (const auto& v : eval["oos_partition_sizes"])
            c.evaluation.oos_partition_sizes.push_back(v.get<std::size_t>());
    c.evaluation.acf_max_lag = static_cast<int>(get_number(eval, "evaluation", "acf_max_lag", 10));
    if (eval.contains("ood")) {
        reject_unknown(eval["ood"], "evaluation.ood", {"n_specs", "paths_per_spec", "lo", "hi"});
        c.evaluation.ood.n_specs = get_u64(eval["ood"], "evaluation.ood", "n_specs", 0);
        c.evaluation.ood.paths_per_spec =
            get_u64(eval["ood"], "evaluation.ood", "paths_per_spec", 2000);
        c.evaluation.ood.lo = get_number(eval["ood"], "evaluation.ood", "lo", 0.9);
        c.evaluation.ood.hi = get_number(eval["ood"], "evaluation.ood", "hi", 1.1);
        if (c.evaluation.ood.lo > c.evaluation.ood.hi) fail("evaluation.ood", "lo must be <= hi");
        if (c.evaluation.ood.n_specs > 0 && c.model.kind() == ModelKind::Gad)
            fail("evaluation.ood", "parameter scaling applies to BS and Heston only");
    }

    if (j.contains("search")) {
        reject_unknown(j["search"], "search", {"alpha_grid", "delta_grid"});
        for (const auto& v : j["search"]["alpha_grid"]) c.search.alpha_grid.push_back(v.get<double>());
        for (const auto& v : j["search"]["delta_grid"]) c.search.delta_grid.push_back(v.get<double>());
    }

    if (j.contains("seeds")) {
        reject_unknown(j["seeds"], "seeds", {"master"});
        c.master_seed = get_u64(j["seeds"], "seeds", "master", 1);
    }
    c.output_dir = get_string(j, "root", "output_dir", c.output_dir);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse_config(os.str());
}

std::string serialize_config(const ExperimentConfig& c) {
    json j;
    j["version"] = c.version;

    json model;
    switch (c.model.kind()) {
    case ModelKind::BlackScholes: {
        const auto& p = c.model.bs();
        model = {{"type", "bs"}, {"s0", p.s0}, {"drift", p.drift}, {"sigma", p.sigma}};
        break;
    }
    case ModelKind::Heston: {
        const auto& p = c.model.heston();
        model = {{"type", "heston"},       {"s0", p.s0},
                 {"v0", p.v0},             {"mean_reversion", p.mean_reversion},
                 {"long_run_var", p.long_run_var}, {"vol_of_vol", p.vol_of_vol},
                 {"correlation", p.correlation},   {"drift", p.drift}};
        break;
    }
    case ModelKind::Gad: {
        const auto& p = c.model.gad();
        model = {{"type", "gad"},
                 {"s0", p.s0},
                 {"a0", {p.a0.lo, p.a0.hi}},
                 {"a1", {p.a1.lo, p.a1.hi}},
                 {"b0", {p.b0.lo, p.b0.hi}},
                 {"b1", {p.b1.lo, p.b1.hi}},
                 {"gamma", p.gamma}};
        break;
    }
    }
    model["maturity_years"] = c.model.maturity_years;
    model["n_steps"] = c.model.n_steps;
    j["model"] = model;
    j["gad_interval_mode"] = c.gad_interval_mode;

    if (const auto* call = std::get_if<EuropeanCall>(&c.payoff))
        j["payoff"] = {{"type", "european_call"}, {"strike", call->strike}};
    else
        j["payoff"] = {{"type", "asian_put"}};
    j["cost"] = {{"rate", c.cost.rate}};
    if (const auto* e = std::get_if<Entropic>(&c.measure))
        j["risk"] = {{"type", "entropic"}, {"risk_aversion", e->risk_aversion}};
    else
        j["risk"] = {{"type", "cvar"}, {"alpha", std::get<Cvar>(c.measure).alpha}};
    j["network"] = {
        {"architecture", c.arch == Architecture::NetRec ? "netrec" : "netsim"}};

    json train = {{"n_train", c.n_train},
                  {"n_validation", c.n_validation},
                  {"n_test", c.n_test},
                  {"clean_epochs", c.clean_epochs},
                  {"adversarial_epochs", c.adversarial_epochs},
                  {"batch_size", c.batch_size},
                  {"learning_rate", c.learning_rate},
                  {"lr_decay_factor", c.lr_decay_factor},
                  {"lr_decay_interval", c.lr_decay_interval},
                  {"clean_weight", c.clean_weight}};
    if (!c.existing_checkpoint.empty()) train["checkpoint"] = c.existing_checkpoint;
    j["train"] = train;

    json attack = {{"method", c.attack.method == AttackMethod::Wpgd    ? "wpgd"
                              : c.attack.method == AttackMethod::Wbpgd ? "wbpgd"
                                                                       : "pgd"},
                   {"delta", c.attack.radius},
                   {"iterations", c.attack.iterations},
                   {"step", c.attack.step},
                   {"tracks", c.attack.tracks.size() == 2 ? "sv" : "s"},
                   {"freeze_initial", c.attack.freeze_initial},
                   {"projection", c.attack.projection == ProjectionMode::ShrinkOnly
                                      ? "shrink"
                                      : "saturate"}};
    if (std::isinf(c.attack.wasserstein_p))
        attack["p"] = "inf";
    else
        attack["p"] = c.attack.wasserstein_p;
    if (c.attack.tracks.size() == 2) attack["sv_weight"] = c.attack.weights()[1];
    j["attack"] = attack;

    json eval = {{"delta_grid", c.evaluation.delta_grid},
                 {"methods", c.evaluation.methods},
                 {"attack_tracks", c.evaluation.attack_tracks},
                 {"acf_max_lag", c.evaluation.acf_max_lag}};
    if (!c.evaluation.oos_partition_sizes.empty())
        eval["oos_partition_sizes"] = c.evaluation.oos_partition_sizes;
    if (c.evaluation.ood.n_specs > 0)
        eval["ood"] = {{"n_specs", c.evaluation.ood.n_specs},
                       {"paths_per_spec", c.evaluation.ood.paths_per_spec},
                       {"lo", c.evaluation.ood.lo},
                       {"hi", c.evaluation.ood.hi}};
    j["evaluation"] = eval;

    if (!c.search.alpha_grid.empty() || !c.search.delta_grid.empty())
        j["search"] = {{"alpha_grid", c.search.alpha_grid},
                       {"delta_grid", c.search.delta_grid}};

    j["seeds"] = {{"master", c.master_seed}};
    j["output_dir"] = c.output_dir;
    return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
    // The hash identifies the experiment, not where its artifacts land.
    ExperimentConfig canonical = config;
    canonical.output_dir.clear();
    return hash_hex(fnv1a64(serialize_config(canonical)));
}

TrainConfig make_train_config(const ExperimentConfig& c) {
    TrainConfig t;
    t.model = c.model;
    t.arch = c.arch;
    t.payoff = c.payoff;
    t.cost = c.cost;
    t.measure = c.measure;
    t.clean_epochs = c.clean_epochs;
    t.adversarial_epochs = c.adversarial_epochs;
    t.batch_size = c.batch_size;
    t.lr.initial = c.learning_rate;
    t.lr.decay_factor = c.lr_decay_factor;
    t.lr.decay_interval = c.lr_decay_interval;
    t.clean_weight = c.clean_weight;
    t.attack = c.attack;
    t.seed = derive_seed(c.master_seed, 10);
    return t;
}

AttackSpec make_attack_spec(const ExperimentConfig& c, const std::string& method,
                            const std::string& tracks) {
    AttackSpec spec = c.attack;
    spec.method = parse_method(method, "evaluation");
    if (tracks == "s") {
        spec.tracks = {"S"};
        spec.track_weights.clear();
    } else if (tracks == "sv") {
        if (c.model.kind() != ModelKind::Heston)
            fail("evaluation", "SV attack requires the Heston variance track");
        spec.tracks = {"S", "v"};
        if (spec.track_weights.size() != 2)
            spec.track_weights = {1.0, c.attack.track_weights.size() == 2
                                           ? c.attack.track_weights[1]
                                           : 1.0};
    } else {
        fail("evaluation", "tracks must be s|sv");
    }
    return spec;
}

} // namespace rhedge
