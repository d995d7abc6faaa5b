#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fqf/error.hpp"
#include "fqf/quantile_function.hpp"

namespace fqf::rl {

using Rng = std::mt19937_64;

inline constexpr std::size_t kDefaultHorizon = 200;

struct Outcome {
    double value;
    double prob;
};

/// Finite MDP with tabular dynamics and finite-support rewards R(x, a).
/// Entering a terminal state ends the episode; terminal states have no rows.
class ToyMDP {
public:
    struct StateSpec {
        std::vector<double> features;
        bool terminal = false;
    };
    struct Row {
        std::vector<Outcome> next;    // value = next state index
        std::vector<Outcome> reward;
    };

    ToyMDP(std::string name, std::vector<StateSpec> states, std::size_t actions, std::vector<Row> rows, double gamma,
           std::size_t start_state = 0, std::size_t horizon = kDefaultHorizon)
        : name_(std::move(name)), states_(std::move(states)), actions_(actions), rows_(std::move(rows)), gamma_(gamma),
          start_(start_state), horizon_(horizon) {
        validate();
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t num_states() const noexcept { return states_.size(); }
    std::size_t num_actions() const noexcept { return actions_; }
    std::size_t feature_dim() const noexcept { return states_.front().features.size(); }
    double gamma() const noexcept { return gamma_; }
    std::size_t start_state() const noexcept { return start_; }
    std::size_t horizon() const noexcept { return horizon_; }
    bool is_terminal(std::size_t s) const { return states_.at(s).terminal; }
    std::span<const double> features(std::size_t s) const { return states_.at(s).features; }
    const Row& row(std::size_t s, std::size_t a) const { return rows_.at(s * actions_ + a); }

    struct StepResult {
        double reward;
        std::size_t next;
        bool terminal;
    };

    StepResult step(std::size_t s, std::size_t a, Rng& rng) const {
        if (is_terminal(s)) throw InvalidArgument("mdp: step from terminal state " + std::to_string(s));
        if (a >= actions_) throw InvalidArgument("mdp: action " + std::to_string(a) + " out of range");
        const auto& r = row(s, a);
        const double reward = draw(r.reward, rng);
        const auto next = static_cast<std::size_t>(draw(r.next, rng));
        return {reward, next, is_terminal(next)};
    }

private:
    static double draw(const std::vector<Outcome>& dist, Rng& rng) {
        if (dist.size() == 1) return dist.front().value;
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double acc = 0.0;
        for (const auto& o : dist) {
            acc += o.prob;
            if (u < acc) return o.value;
        }
        return dist.back().value;
    }

    void validate() const {
        const std::string where = "mdp '" + name_ + "': ";
        if (states_.empty()) throw InvalidArgument(where + "needs at least one state");
        if (actions_ == 0) throw InvalidArgument(where + "needs at least one action");
        if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InvalidArgument(where + "gamma must lie in (0,1)");
        if (horizon_ == 0) throw InvalidArgument(where + "horizon must be positive");
        if (start_ >= states_.size() || states_[start_].terminal)
            throw InvalidArgument(where + "start state must be a non-terminal state");
        if (rows_.size() != states_.size() * actions_)
            throw InvalidArgument(where + "expected one row per (state, action)");
        const auto dim = states_.front().features.size();
        if (dim == 0) throw InvalidArgument(where + "state features must be non-empty");
        for (const auto& s : states_) {
            if (s.features.size() != dim) throw InvalidArgument(where + "all states need the same feature length");
            for (double f : s.features)
                if (!std::isfinite(f)) throw InvalidArgument(where + "features must be finite");
        }
        for (std::size_t s = 0; s < states_.size(); ++s) {
            if (states_[s].terminal) continue;
            for (std::size_t a = 0; a < actions_; ++a) {
                const auto& r = rows_[s * actions_ + a];
                const std::string at = where + "row (" + std::to_string(s) + ", " + std::to_string(a) + "): ";
                check_distribution(r.next, at + "transition");
                check_distribution(r.reward, at + "reward");
                for (const auto& o : r.next) {
                    if (o.value < 0 || o.value >= static_cast<double>(states_.size()) || o.value != std::floor(o.value))
                        throw InvalidArgument(at + "next state out of range");
                }
            }
        }
    }

    static void check_distribution(const std::vector<Outcome>& dist, const std::string& what) {
        if (dist.empty()) throw InvalidArgument(what + " distribution is empty");
        double total = 0.0;
        for (const auto& o : dist) {
            if (!std::isfinite(o.value)) throw InvalidArgument(what + " values must be finite");
            if (!(o.prob >= 0.0)) throw InvalidArgument(what + " probabilities must be non-negative");
            total += o.prob;
        }
        if (std::fabs(total - 1.0) > 1e-12) throw InvalidArgument(what + " probabilities must sum to 1");
    }

    std::string name_;
    std::vector<StateSpec> states_;
    std::size_t actions_;
    std::vector<Row> rows_;
    double gamma_;
    std::size_t start_;
    std::size_t horizon_;
};

namespace detail {

inline std::vector<ToyMDP::StateSpec> one_hot_states(std::size_t n, std::vector<std::size_t> terminals) {
    std::vector<ToyMDP::StateSpec> states(n);
    for (std::size_t s = 0; s < n; ++s) {
        states[s].features.assign(n, 0.0);
        states[s].features[s] = 1.0;
    }
    for (auto t : terminals) states[t].terminal = true;
    return states;
}

inline ToyMDP::Row det(std::size_t next, double reward) {
    return {{{static_cast<double>(next), 1.0}}, {{reward, 1.0}}};
}

} // namespace detail

/// One non-terminal state looping on itself with reward 1.
inline ToyMDP single_state_mdp(double reward = 1.0, double gamma = 0.5) {
    return ToyMDP("single_state", {{{1.0}, false}}, 1, {detail::det(0, reward)}, gamma);
}

/// Three deterministic reward-1 steps into a terminal.
inline ToyMDP terminal_chain_mdp(double gamma = 0.5) {
    return ToyMDP("terminal_chain", detail::one_hot_states(4, {3}), 1,
                  {detail::det(1, 1.0), detail::det(2, 1.0), detail::det(3, 1.0), {}}, gamma);
}

/// One step; arm k pays from `arms[k]`, then the episode ends.
inline ToyMDP bandit_mdp(std::string name, std::vector<std::vector<Outcome>> arms, double gamma = 0.9) {
    std::vector<ToyMDP::Row> rows;
    for (auto& arm : arms) rows.push_back({{{1.0, 1.0}}, std::move(arm)});
    for (std::size_t a = 0; a < arms.size(); ++a) rows.push_back({});
    return ToyMDP(std::move(name), {{{1.0}, false}, {{0.0}, true}}, arms.size(), std::move(rows), gamma);
}

inline ToyMDP coin_bandit_mdp() { return bandit_mdp("bandit", {{{0.0, 0.5}, {2.0, 0.5}}}); }

inline ToyMDP two_armed_bandit_mdp(double high = 2.0) {
    return bandit_mdp(high == 2.0 ? "two_armed_bandit" : "two_armed_bandit_wide",
                      {{{1.0, 1.0}}, {{0.0, 0.5}, {high, 0.5}}});
}

/// Two steps with coin-flip rewards {0,1} then {0,3}.
inline ToyMDP coin_chain_mdp(double gamma = 0.5) {
    std::vector<ToyMDP::Row> rows{{{{1.0, 1.0}}, {{0.0, 0.5}, {1.0, 0.5}}},
                                  {{{2.0, 1.0}}, {{0.0, 0.5}, {3.0, 0.5}}},
                                  {}};
    return ToyMDP("coin_chain", detail::one_hot_states(3, {2}), 1, std::move(rows), gamma);
}

/// States 0..4 in a line, start at 0. Action 0 moves left, action 1 right;
/// stepping right from state 4 enters the terminal and pays `final_reward`.
inline ToyMDP chain_mdp(std::vector<Outcome> final_reward = {{1.0, 1.0}}, double gamma = 0.9) {
    const bool stochastic = final_reward.size() > 1;
    std::vector<ToyMDP::Row> rows;
    for (std::size_t s = 0; s < 5; ++s) {
        rows.push_back(detail::det(s == 0 ? 0 : s - 1, 0.0));
        if (s < 4) rows.push_back(detail::det(s + 1, 0.0));
        else rows.push_back({{{5.0, 1.0}}, final_reward});
    }
    rows.push_back({});
    rows.push_back({});
    return ToyMDP(stochastic ? "chain_stochastic" : "chain", detail::one_hot_states(6, {5}), 2, std::move(rows), gamma);
}

/// 4x4 grid, start bottom-left (0,0), goal top-right (3,3), reward -1 per step.
/// Actions: 0 up, 1 down, 2 left, 3 right. In columns 1 and 2 a wind pushes
/// one extra cell up with probability `wind`.
inline ToyMDP windy_gridworld_mdp(double wind = 0.5, double gamma = 0.9) {
    constexpr std::size_t side = 4;
    const std::size_t goal = side * side - 1;
    auto index = [](std::size_t col, std::size_t row) { return row * side + col; };
    std::vector<ToyMDP::Row> rows;
    for (std::size_t s = 0; s < side * side; ++s) {
        const std::size_t col = s % side, row = s / side;
        for (std::size_t a = 0; a < 4; ++a) {
            if (s == goal) {
                rows.push_back({});
                continue;
            }
            std::size_t c = col, r = row;
            if (a == 0 && r + 1 < side) ++r;
            if (a == 1 && r > 0) --r;
            if (a == 2 && c > 0) --c;
            if (a == 3 && c + 1 < side) ++c;
            const std::size_t calm = index(c, r);
            const std::size_t blown = index(c, std::min(r + 1, side - 1));
            ToyMDP::Row out;
            out.reward = {{-1.0, 1.0}};
            if ((col == 1 || col == 2) && blown != calm && wind > 0.0) {
                out.next = {{static_cast<double>(calm), 1.0 - wind}, {static_cast<double>(blown), wind}};
            } else {
                out.next = {{static_cast<double>(calm), 1.0}};
            }
            rows.push_back(std::move(out));
        }
    }
    return ToyMDP("windy_gridworld", detail::one_hot_states(side * side, {goal}), 4, std::move(rows), gamma);
}

/// Two actions, all rewards zero, terminates with probability 1/2 per step.
inline ToyMDP zero_reward_mdp(double gamma = 0.9) {
    std::vector<ToyMDP::Row> rows;
    for (int a = 0; a < 2; ++a) rows.push_back({{{0.0, 0.5}, {1.0, 0.5}}, {{0.0, 1.0}}});
    rows.push_back({});
    rows.push_back({});
    return ToyMDP("zero_reward", {{{1.0}, false}, {{0.0}, true}}, 2, std::move(rows), gamma);
}

inline std::vector<std::string> builtin_environment_names() {
    return {"single_state", "terminal_chain", "bandit", "two_armed_bandit", "two_armed_bandit_wide",
            "coin_chain", "chain", "chain_stochastic", "windy_gridworld", "zero_reward"};
}

inline ToyMDP builtin_environment(const std::string& name) {
    if (name == "single_state") return single_state_mdp();
    if (name == "terminal_chain") return terminal_chain_mdp();
    if (name == "bandit") return coin_bandit_mdp();
    if (name == "two_armed_bandit") return two_armed_bandit_mdp(2.0);
    if (name == "two_armed_bandit_wide") return two_armed_bandit_mdp(4.0);
    if (name == "coin_chain") return coin_chain_mdp();
    if (name == "chain") return chain_mdp();
    if (name == "chain_stochastic") return chain_mdp({{0.0, 0.5}, {2.0, 0.5}});
    if (name == "windy_gridworld") return windy_gridworld_mdp();
    if (name == "zero_reward") return zero_reward_mdp();
    std::string known;
    for (const auto& n : builtin_environment_names()) known += (known.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown environment '" + name + "' (known: " + known + ")");
}

namespace detail {

inline std::vector<Outcome> outcomes_from_json(const nlohmann::json& j) {
    if (j.is_number()) return {{j.get<double>(), 1.0}};
    std::vector<Outcome> out;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2) throw InvalidArgument("expected [value, probability] pairs");
        out.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    return out;
}

} // namespace detail

/// Builds an MDP from the declarative environment schema (see README).
inline ToyMDP mdp_from_json(const nlohmann::json& j) {
    try {
        if (j.value("schema_version", 0) != 1) throw InvalidArgument("environment: schema_version must be 1");
        const auto name = j.value("name", std::string("custom"));
        const auto actions = j.at("actions").get<std::size_t>();
        std::vector<ToyMDP::StateSpec> states;
        const auto& js = j.at("states");
        for (std::size_t s = 0; s < js.size(); ++s) {
            ToyMDP::StateSpec spec;
            spec.terminal = js[s].value("terminal", false);
            if (js[s].contains("features")) {
                spec.features = js[s]["features"].get<std::vector<double>>();
            } else {
                spec.features.assign(js.size(), 0.0);
                spec.features[s] = 1.0;
            }
            states.push_back(std::move(spec));
        }
        std::vector<ToyMDP::Row> rows(states.size() * actions);
        std::vector<bool> seen(rows.size(), false);
        for (const auto& t : j.at("transitions")) {
            const auto s = t.at("state").get<std::size_t>();
            const auto a = t.at("action").get<std::size_t>();
            if (s >= states.size() || a >= actions) throw InvalidArgument("environment: transition index out of range");
            const auto k = s * actions + a;
            if (seen[k]) throw InvalidArgument("environment: duplicate transition for state " + std::to_string(s));
            seen[k] = true;
            rows[k].next = detail::outcomes_from_json(t.at("next"));
            rows[k].reward = detail::outcomes_from_json(t.at("reward"));
        }
        return ToyMDP(name, std::move(states), actions, std::move(rows), j.at("gamma").get<double>(),
                      j.value("start_state", std::size_t{0}), j.value("horizon", kDefaultHorizon));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("environment: ") + e.what());
    }
}

inline ToyMDP mdp_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open environment file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("environment " + path + ": " + e.what());
    }
    return mdp_from_json(j);
}

using Policy = std::function<std::size_t(std::size_t state, Rng& rng)>;

/// Discounted return of one episode starting with action a at x, then `policy`.
/// Truncated after the MDP horizon.
inline double rollout_return(const ToyMDP& mdp, const Policy& policy, std::size_t x, std::size_t a, Rng& rng,
                             double gamma) {
    double ret = 0.0, discount = 1.0;
    std::size_t s = x, action = a;
    for (std::size_t t = 0; t < mdp.horizon(); ++t) {
        const auto step = mdp.step(s, action, rng);
        ret += discount * step.reward;
        if (step.terminal) break;
        discount *= gamma;
        s = step.next;
        action = policy(s, rng);
    }
    return ret;
}

/// Empirical quantile function of n_draws Monte-Carlo discounted returns.
inline QuantileFunction true_return_distribution(const ToyMDP& mdp, const Policy& policy, std::size_t x, std::size_t a,
                                                 std::size_t n_draws, Rng& rng) {
    if (n_draws == 0) throw InvalidArgument("true_return_distribution: needs at least one draw");
    std::vector<double> returns(n_draws);
    for (auto& r : returns) r = rollout_return(mdp, policy, x, a, rng, mdp.gamma());
    return empirical_quantile_from_samples(returns);
}

struct ReturnStats {
    double mean;
    double stderr_;
};

/// Undiscounted episode returns from the start state under `policy`.
inline ReturnStats evaluate_policy(const ToyMDP& mdp, const Policy& policy, std::size_t episodes, Rng& rng) {
    if (episodes == 0) throw InvalidArgument("evaluate_policy: needs at least one episode");
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        const auto s0 = mdp.start_state();
        const double r = rollout_return(mdp, policy, s0, policy(s0, rng), rng, 1.0);
        sum += r;
        sum_sq += r * r;
    }
    const double n = static_cast<double>(episodes);
    const double mean = sum / n;
    const double var = episodes > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

} // namespace fqf::rl
