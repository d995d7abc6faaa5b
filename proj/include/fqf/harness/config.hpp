#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fqf/error.hpp"
#include "fqf/quantile_function.hpp"
#include "fqf/rl/agent.hpp"
#include "fqf/rl/mdp.hpp"

namespace fqf::harness {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { Approx, Gradcheck, Optimize, Train, Sweep };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::Approx: return "approx";
    case ExperimentKind::Gradcheck: return "gradcheck";
    case ExperimentKind::Optimize: return "optimize";
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Sweep: return "sweep";
    }
    return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::Approx, ExperimentKind::Gradcheck, ExperimentKind::Optimize, ExperimentKind::Train,
                   ExperimentKind::Sweep})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown experiment kind '" + s + "' (known: approx, gradcheck, optimize, train, sweep)");
}

struct DistributionSpec {
    std::string name;
    std::vector<double> params;  // empty selects the defaults
    std::string label;
};

inline const std::vector<std::string>& distribution_names() {
    static const std::vector<std::string> names{"uniform",   "gaussian",    "exponential", "truncated_gaussian",
                                                "two_point", "three_point"};
    return names;
}

/// Builds a named target. Parameters (defaults in brackets):
///   uniform a b [0 1]; gaussian mu sigma [0 1]; exponential rate [1];
///   truncated_gaussian mu sigma lo hi [0 1 -2 2]; two_point v1 p1 v2 [0 0.3 2];
///   three_point v1 v2 v3 p1 p2 p3 [-1 0.5 2 0.2 0.5 0.3].
inline QuantileFunction make_distribution(const DistributionSpec& spec) {
    const auto& p = spec.params;
    auto need = [&](std::size_t n) {
        if (!p.empty() && p.size() != n)
            throw InvalidArgument("distribution '" + spec.name + "' takes " + std::to_string(n) + " parameters");
        return p.empty();
    };
    if (spec.name == "uniform") return need(2) ? QuantileFunction::uniform(0, 1) : QuantileFunction::uniform(p[0], p[1]);
    if (spec.name == "gaussian") return need(2) ? QuantileFunction::gaussian(0, 1) : QuantileFunction::gaussian(p[0], p[1]);
    if (spec.name == "exponential") return need(1) ? QuantileFunction::exponential(1) : QuantileFunction::exponential(p[0]);
    if (spec.name == "truncated_gaussian")
        return need(4) ? QuantileFunction::truncated_gaussian(0, 1, -2, 2)
                       : QuantileFunction::truncated_gaussian(p[0], p[1], p[2], p[3]);
    if (spec.name == "two_point")
        return need(3) ? QuantileFunction::two_point(0.0, 0.3, 2.0) : QuantileFunction::two_point(p[0], p[1], p[2]);
    if (spec.name == "three_point")
        return need(6) ? QuantileFunction::discrete({-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3})
                       : QuantileFunction::discrete({p[0], p[1], p[2]}, {p[3], p[4], p[5]});
    std::string known;
    for (const auto& n : distribution_names()) known += (known.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown distribution '" + spec.name + "' (known: " + known + ")");
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Approx;
    std::string id;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";
    bool record_wall_clock = false;

    // approx / optimize
    std::vector<DistributionSpec> distributions;
    std::vector<std::size_t> N;
    std::size_t steps = 2000;
    double step_size = 0.05;
    double decay = 0.95;
    double entropy_coeff = 0.0;
    std::size_t random_draws = 100;
    std::size_t log_every = 100;

    // gradcheck
    std::size_t pairs = 100;
    std::size_t backprop_params = 200;
    bool inject_sign_flip = false;
    bool zero_net = false;

    // train
    std::string environment = "single_state";
    std::string environment_file;
    rl::AgentConfig agent;
    bool gamma_set = false;
    std::size_t updates = 3000;
    std::size_t eval_every = 0;
    std::size_t eval_episodes = 20;
    std::size_t mc_draws = 200;

    // sweep
    ExperimentKind base_kind = ExperimentKind::Train;
    std::vector<rl::AgentKind> agent_kinds;

    rl::ToyMDP make_environment() const {
        return environment_file.empty() ? rl::builtin_environment(environment) : rl::mdp_from_file(environment_file);
    }

    /// Agent configuration with gamma taken from the environment unless set.
    rl::AgentConfig agent_for(const rl::ToyMDP& mdp) const {
        auto cfg = agent;
        if (!gamma_set) cfg.gamma = mdp.gamma();
        cfg.validate();
        return cfg;
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw InvalidArgument(where + ": unknown key '" + it.key() + "'");
}

inline rl::AgentConfig agent_from_json(const nlohmann::json& j, bool& gamma_set) {
    reject_unknown_keys(j,
                        {"kind", "N", "kappa", "gamma", "epsilon_train", "epsilon_eval", "value_lr", "adam_epsilon",
                         "fraction_lr", "fraction_decay", "target_sync", "entropy_coeff", "hidden", "n_basis",
                         "batch_size", "replay_capacity", "warmup"},
                        "agent");
    rl::AgentConfig c;
    if (j.contains("kind")) c.kind = rl::agent_kind_from_string(j["kind"].get<std::string>());
    c.N = j.value("N", c.N);
    c.kappa = j.value("kappa", c.kappa);
    gamma_set = j.contains("gamma");
    c.gamma = j.value("gamma", c.gamma);
    c.epsilon_train = j.value("epsilon_train", c.epsilon_train);
    c.epsilon_eval = j.value("epsilon_eval", c.epsilon_eval);
    c.value_lr = j.value("value_lr", c.value_lr);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.fraction_lr = j.value("fraction_lr", c.fraction_lr);
    c.fraction_decay = j.value("fraction_decay", c.fraction_decay);
    c.target_sync = j.value("target_sync", c.target_sync);
    c.entropy_coeff = j.value("entropy_coeff", c.entropy_coeff);
    c.hidden = j.value("hidden", c.hidden);
    c.n_basis = j.value("n_basis", c.n_basis);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.warmup = j.value("warmup", c.warmup);
    return c;
}

inline DistributionSpec distribution_from_json(const nlohmann::json& j) {
    DistributionSpec d;
    if (j.is_string()) {
        d.name = j.get<std::string>();
    } else {
        reject_unknown_keys(j, {"name", "params", "label"}, "distribution");
        d.name = j.at("name").get<std::string>();
        d.params = j.value("params", std::vector<double>{});
        d.label = j.value("label", std::string{});
    }
    if (d.label.empty()) d.label = d.name;
    make_distribution(d);  // validates name and parameters
    return d;
}

} // namespace detail

/// Parses a configuration document. Relative environment paths resolve
/// against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    try {
        if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
        detail::reject_unknown_keys(
            j,
            {"schema_version", "kind", "id", "seeds", "output_dir", "record_wall_clock", "distributions", "N", "steps",
             "step_size", "decay", "entropy_coeff", "random_draws", "log_every", "pairs", "backprop_params",
             "inject_sign_flip", "zero_net", "environment", "environment_file", "agent", "updates", "eval_every",
             "eval_episodes", "mc_draws", "base_kind", "agent_kinds"},
            "config");
        if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion)
            throw InvalidArgument("config: schema_version must be " + std::to_string(kSchemaVersion));
        ExperimentConfig c;
        c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
        c.id = j.value("id", to_string(c.kind));
        if (c.id.empty() || c.id.find_first_of(",/\\\n") != std::string::npos)
            throw InvalidArgument("config: id must be non-empty without commas or slashes");
        c.seeds = j.value("seeds", c.seeds);
        if (c.seeds.empty()) throw InvalidArgument("config: at least one seed is required");
        c.output_dir = j.value("output_dir", c.output_dir);
        c.record_wall_clock = j.value("record_wall_clock", false);
        if (j.contains("distributions"))
            for (const auto& d : j["distributions"]) c.distributions.push_back(detail::distribution_from_json(d));
        c.N = j.value("N", c.N);
        for (auto n : c.N)
            if (n == 0) throw InvalidArgument("config: N values must be positive");
        c.steps = j.value("steps", c.steps);
        c.step_size = j.value("step_size", c.step_size);
        c.decay = j.value("decay", c.decay);
        c.entropy_coeff = j.value("entropy_coeff", c.entropy_coeff);
        c.random_draws = j.value("random_draws", c.random_draws);
        c.log_every = j.value("log_every", c.log_every);
        c.pairs = j.value("pairs", c.pairs);
        c.backprop_params = j.value("backprop_params", c.backprop_params);
        c.inject_sign_flip = j.value("inject_sign_flip", false);
        c.zero_net = j.value("zero_net", false);
        c.environment = j.value("environment", c.environment);
        if (j.contains("environment_file")) {
            std::filesystem::path p = j["environment_file"].get<std::string>();
            c.environment_file = (p.is_relative() ? base_dir / p : p).string();
        }
        if (j.contains("agent")) c.agent = detail::agent_from_json(j["agent"], c.gamma_set);
        c.updates = j.value("updates", c.updates);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
        c.mc_draws = j.value("mc_draws", c.mc_draws);
        if (j.contains("base_kind")) c.base_kind = experiment_kind_from_string(j["base_kind"].get<std::string>());
        if (j.contains("agent_kinds"))
            for (const auto& k : j["agent_kinds"]) c.agent_kinds.push_back(rl::agent_kind_from_string(k.get<std::string>()));

        if (c.kind == ExperimentKind::Sweep && c.base_kind != ExperimentKind::Train && c.base_kind != ExperimentKind::Approx)
            throw InvalidArgument("config: sweep base_kind must be train or approx");
        if (!(c.step_size > 0)) throw InvalidArgument("config: step_size must be positive");
        if (c.kind == ExperimentKind::Train || (c.kind == ExperimentKind::Sweep && c.base_kind == ExperimentKind::Train)) {
            const auto mdp = c.make_environment();
            c.agent_for(mdp);
            if (c.updates == 0) throw InvalidArgument("config: updates must be positive");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
    return config_from_json(j, std::filesystem::path(path).parent_path());
}

} // namespace fqf::harness
