#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fqf/error.hpp"
#include "fqf/fraction_engine.hpp"
#include "fqf/quantile_loss.hpp"
#include "fqf/rl/mdp.hpp"
#include "fqf/rl/replay.hpp"
#include "fqf/staircase.hpp"
#include "fqf/value_net.hpp"

namespace fqf::rl {

enum class AgentKind { FQF, FixedFraction, SampledFraction };

inline std::string to_string(AgentKind k) {
    switch (k) {
    case AgentKind::FQF: return "fqf";
    case AgentKind::FixedFraction: return "fixed";
    case AgentKind::SampledFraction: return "sampled";
    }
    return "?";
}

inline AgentKind agent_kind_from_string(const std::string& s) {
    if (s == "fqf") return AgentKind::FQF;
    if (s == "fixed") return AgentKind::FixedFraction;
    if (s == "sampled") return AgentKind::SampledFraction;
    throw InvalidArgument("unknown agent kind '" + s + "' (known: fqf, fixed, sampled)");
}

struct AgentConfig {
    AgentKind kind = AgentKind::FQF;
    std::size_t N = 32;
    double kappa = 1.0;
    double gamma = 0.99;
    double epsilon_train = 0.1;
    double epsilon_eval = 0.001;
    double value_lr = 1e-3;
    double adam_epsilon = 0.01 / 32.0;
    double fraction_lr = 5e-8;  // 5e-5 x value_lr
    double fraction_decay = 0.95;
    std::size_t target_sync = 100;
    double entropy_coeff = 0.001;
    std::size_t hidden = 64;
    std::size_t n_basis = 64;
    std::size_t batch_size = 32;
    std::size_t replay_capacity = 10000;
    std::size_t warmup = 100;

    void validate() const {
        if (N == 0) throw InvalidArgument("agent: N must be at least 1");
        if (!(kappa > 0)) throw InvalidArgument("agent: kappa must be positive");
        if (!(gamma > 0 && gamma < 1)) throw InvalidArgument("agent: gamma must lie in (0,1)");
        if (!(epsilon_train >= 0 && epsilon_train <= 1)) throw InvalidArgument("agent: epsilon_train must lie in [0,1]");
        if (!(epsilon_eval >= 0 && epsilon_eval <= 1)) throw InvalidArgument("agent: epsilon_eval must lie in [0,1]");
        if (!(value_lr >= 0) || !(fraction_lr >= 0)) throw InvalidArgument("agent: step sizes must be non-negative");
        if (!(entropy_coeff >= 0)) throw InvalidArgument("agent: entropy_coeff must be non-negative");
        if (target_sync == 0 || batch_size == 0 || replay_capacity == 0 || hidden == 0 || n_basis == 0)
            throw InvalidArgument("agent: target_sync, batch_size, replay_capacity, hidden and n_basis must be positive");
    }
};

/// r + gamma * next elementwise; all-r when terminal.
inline std::vector<double> bellman_target(double r, double gamma, bool terminal, std::span<const double> next) {
    std::vector<double> out(next.size(), r);
    if (!terminal)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += gamma * next[i];
    return out;
}

inline std::size_t argmax_lowest(std::span<const double> q) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q.size(); ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

/// Greedy (lowest index on ties) with probability 1 - epsilon, uniform otherwise.
inline std::size_t epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
    if (q.empty()) throw InvalidArgument("epsilon_greedy: needs at least one action");
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon)
        return std::uniform_int_distribution<std::size_t>(0, q.size() - 1)(rng);
    return argmax_lowest(q);
}

struct UpdateDiagnostics {
    std::size_t update = 0;
    double loss = 0.0;
    double mean_abs_fraction_grad = 0.0;  // FQF only
    double monotonicity_violation_rate = 0.0;
};

struct QuantileEstimate {
    FractionSet fractions;
    std::vector<double> values;  // at fraction midpoints
};

/// Value network w2 with a target copy, plus (FQF only) a per-action linear
/// fraction proposer w1 on the state embedding psi(x). w1 gradients stop at psi.
class Agent {
public:
    Agent(std::size_t state_dim, std::size_t actions, AgentConfig config, std::uint64_t seed)
        : config_((config.validate(), config)), rng_(seed),
          online_(init_net(NetShape{state_dim, config.hidden, config.n_basis, actions}, rng_)), target_(online_),
          w1_(actions * config.N * (config.hidden + 1), 0.0),
          adam_(config.value_lr, 0.9, 0.999, config.adam_epsilon),
          fraction_opt_(config.fraction_lr > 0 ? config.fraction_lr : 1.0, config.fraction_decay) {}

    Agent(const ToyMDP& mdp, AgentConfig config, std::uint64_t seed)
        : Agent(mdp.feature_dim(), mdp.num_actions(), config, seed) {}

    const AgentConfig& config() const noexcept { return config_; }
    const QuantileValueNet& online() const noexcept { return online_; }
    const QuantileValueNet& target() const noexcept { return target_; }
    std::size_t updates() const noexcept { return updates_; }
    std::span<const double> proposer_params() const noexcept { return w1_; }

    /// Fractions used for acting and reporting at state features x.
    FractionSet fractions(std::span<const double> x, std::size_t a) const {
        if (config_.kind != AgentKind::FQF) return FractionSet::equally_spaced(config_.N);
        return proposer_at(online_.encode(x), a).fractions();
    }

    QuantileEstimate quantile_estimate(std::span<const double> x, std::size_t a) const {
        auto fs = fractions(x, a);
        auto values = online_.quantiles(x, fs.midpoints(), a);
        return {std::move(fs), std::move(values)};
    }

    std::vector<double> q_values(std::span<const double> x) const { return q_values_of(online_, x, online_.encode(x)); }

    std::size_t act(std::span<const double> x, double epsilon, Rng& rng) const {
        if (online_.shape().actions == 1) return epsilon_greedy(std::vector<double>{0.0}, epsilon, rng);
        return epsilon_greedy(q_values(x), epsilon, rng);
    }

    Policy policy(const ToyMDP& mdp, double epsilon) const {
        return [this, &mdp, epsilon](std::size_t s, Rng& rng) { return act(mdp.features(s), epsilon, rng); };
    }

    /// One gradient step on w2 (and w1 for FQF) from a batch of transitions.
    UpdateDiagnostics update(const ToyMDP& mdp, std::span<const Transition> batch) {
        if (batch.empty()) throw InvalidArgument("agent update: batch must be non-empty");
        const std::size_t n = config_.N, d = config_.hidden, na = online_.shape().actions;
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        const HuberParams huber(config_.kappa);
        const bool fqf = config_.kind == AgentKind::FQF;

        auto grads = online_.zero_gradients();
        std::vector<double> w1_grad(fqf ? w1_.size() : 0, 0.0);
        UpdateDiagnostics diag;
        std::size_t violations = 0;

        for (const auto& t : batch) {
            const auto x = mdp.features(t.x);
            const auto psi = online_.encode(x);
            std::vector<double> logits;
            FractionSet fs = FractionSet::equally_spaced(n);
            if (fqf) {
                const auto p = proposer_at(psi, t.a);
                logits = p.logits;
                fs = p.fractions();
            } else if (config_.kind == AgentKind::SampledFraction) {
                fs = sample_fractions();
            }
            const auto mids = fs.midpoints();
            const auto fp = online_.forward(x, mids);
            std::vector<double> current(n);
            for (std::size_t j = 0; j < n; ++j) current[j] = fp.out(j, t.a);
            for (std::size_t j = 1; j < n; ++j)
                if (current[j] < current[j - 1]) ++violations;

            std::vector<double> next_q(n, 0.0);
            if (!t.terminal) next_q = target_quantiles(mdp.features(t.next), mids);
            const auto target = bellman_target(t.r, config_.gamma, t.terminal, next_q);
            const auto delta = td_error_matrix(0.0, 1.0, target, current);
            diag.loss += inv_b * quantile_loss(delta, mids, huber);

            const auto dcur = quantile_loss_current_gradient(delta, mids, huber);
            Matrix up(n, na);
            for (std::size_t j = 0; j < n; ++j) up(j, t.a) = inv_b * dcur[j];
            online_.backward(fp, up, grads);

            if (fqf && n > 1) {
                const auto interior = online_.quantiles(x, fs.interior(), t.a);
                std::vector<double> tau_grad(n - 1);
                double abs_sum = 0.0;
                for (std::size_t i = 1; i < n; ++i) {
                    tau_grad[i - 1] = 2.0 * interior[i - 1] - current[i] - current[i - 1];
                    abs_sum += std::fabs(tau_grad[i - 1]);
                }
                diag.mean_abs_fraction_grad += inv_b * abs_sum / static_cast<double>(n - 1);
                const auto lg = FractionProposer{logits, config_.entropy_coeff}.logit_gradient(tau_grad);
                for (std::size_t k = 0; k < n; ++k) {
                    const std::size_t row = t.a * n + k;
                    const double g = inv_b * lg[k];
                    double* w = &w1_grad[row * d];
                    for (std::size_t j = 0; j < d; ++j) w[j] += g * psi[j];
                    w1_grad[bias_offset() + row] += g;
                }
            }
        }

        if (!std::isfinite(diag.loss))
            throw NumericalError("non-finite loss at update " + std::to_string(updates_ + 1) +
                                 " (mean |dW1/dtau| = " + std::to_string(diag.mean_abs_fraction_grad) + ")");
        adam_.apply(online_.parameters(), grads);
        if (fqf && config_.fraction_lr > 0) {
            fraction_opt_.apply(w1_, w1_grad);
            for (double v : w1_)
                if (!std::isfinite(v)) throw NumericalError("non-finite fraction proposer parameter");
        }
        ++updates_;
        if (updates_ % config_.target_sync == 0) target_ = online_;
        diag.update = updates_;
        diag.monotonicity_violation_rate =
            n > 1 ? static_cast<double>(violations) / static_cast<double>(batch.size() * (n - 1)) : 0.0;
        return diag;
    }

    /// Proposer parameters as checkpoint tensors (empty unless FQF).
    TensorList proposer_tensors() const {
        if (config_.kind != AgentKind::FQF) return {};
        const std::size_t rows = online_.shape().actions * config_.N;
        Tensor w("proposer.weight", {rows, config_.hidden});
        Tensor b("proposer.bias", {rows});
        std::copy(w1_.begin(), w1_.begin() + static_cast<std::ptrdiff_t>(bias_offset()), w.data.begin());
        std::copy(w1_.begin() + static_cast<std::ptrdiff_t>(bias_offset()), w1_.end(), b.data.begin());
        return {w, b};
    }

private:
    static QuantileValueNet init_net(NetShape shape, Rng& rng) { return QuantileValueNet::initialized(shape, rng, 0.0); }

    std::size_t bias_offset() const { return online_.shape().actions * config_.N * config_.hidden; }

    FractionProposer proposer_at(std::span<const double> psi, std::size_t a) const {
        const std::size_t n = config_.N, d = config_.hidden;
        FractionProposer p{std::vector<double>(n), config_.entropy_coeff};
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t row = a * n + k;
            double acc = w1_[bias_offset() + row];
            const double* w = &w1_[row * d];
            for (std::size_t j = 0; j < d; ++j) acc += w[j] * psi[j];
            p.logits[k] = acc;
        }
        return p;
    }

    FractionSet sample_fractions() {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        while (true) {
            std::vector<double> interior(config_.N - 1);
            for (auto& v : interior) v = u(rng_);
            std::sort(interior.begin(), interior.end());
            try {
                return FractionSet(interior);
            } catch (const InvalidArgument&) {
            }
        }
    }

    // Q per action; FQF uses per-action proposals at x.
    std::vector<double> q_values_of(const QuantileValueNet& net, std::span<const double> x,
                                    std::span<const double> psi) const {
        const std::size_t na = net.shape().actions;
        std::vector<double> q(na);
        if (config_.kind != AgentKind::FQF) {
            const auto fs = FractionSet::equally_spaced(config_.N);
            const auto fp = net.forward(x, fs.midpoints());
            for (std::size_t a = 0; a < na; ++a) {
                std::vector<double> v(config_.N);
                for (std::size_t j = 0; j < v.size(); ++j) v[j] = fp.out(j, a);
                q[a] = action_value(fs, v);
            }
            return q;
        }
        for (std::size_t a = 0; a < na; ++a) {
            const auto fs = proposer_at(psi, a).fractions();
            q[a] = action_value(fs, net.quantiles(x, fs.midpoints(), a));
        }
        return q;
    }

    // Target-network quantiles at x' for the greedy a*, evaluated at `mids`
    // (shared with the current quantiles; resampled for SampledFraction).
    std::vector<double> target_quantiles(std::span<const double> next_x, const std::vector<double>& mids) {
        const std::size_t na = target_.shape().actions;
        if (config_.kind == AgentKind::SampledFraction) {
            const auto fs = sample_fractions();
            const auto fp = target_.forward(next_x, fs.midpoints());
            std::vector<double> q(na);
            std::vector<std::vector<double>> values(na, std::vector<double>(config_.N));
            for (std::size_t a = 0; a < na; ++a) {
                for (std::size_t j = 0; j < config_.N; ++j) values[a][j] = fp.out(j, a);
                q[a] = action_value(fs, values[a]);
            }
            return values[argmax_lowest(q)];
        }
        std::size_t best = 0;
        if (na > 1) {
            const auto q = q_values_of(target_, next_x, online_.encode(next_x));
            best = argmax_lowest(q);
        }
        return target_.quantiles(next_x, mids, best);
    }

    AgentConfig config_;
    Rng rng_;
    QuantileValueNet online_;
    QuantileValueNet target_;
    std::vector<double> w1_;  // proposer.weight (A*N x d) then proposer.bias (A*N)
    AdamOptimizer adam_;
    OptimizerState fraction_opt_;
    std::size_t updates_ = 0;
};

inline ReturnStats evaluate_policy(const ToyMDP& mdp, const Agent& agent, std::size_t episodes, double epsilon_eval,
                                   Rng& rng) {
    return evaluate_policy(mdp, agent.policy(mdp, epsilon_eval), episodes, rng);
}

struct TrainOptions {
    std::size_t updates = 5000;
    std::size_t log_every = 100;
};

/// Runs epsilon-greedy interaction with one update per environment step once
/// the replay holds `warmup` transitions. `on_log` sees every `log_every`-th
/// update and the last one.
inline void train(const ToyMDP& mdp, Agent& agent, const TrainOptions& opts, std::uint64_t seed,
                  const std::function<void(const UpdateDiagnostics&)>& on_log = {}) {
    const auto& cfg = agent.config();
    Rng env_rng(seed);
    ReplayBuffer replay(cfg.replay_capacity, seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t warmup = std::max<std::size_t>(1, std::min(cfg.warmup, cfg.replay_capacity));
    std::size_t state = mdp.start_state(), t = 0, done = 0;
    while (done < opts.updates) {
        const auto a = agent.act(mdp.features(state), cfg.epsilon_train, env_rng);
        const auto step = mdp.step(state, a, env_rng);
        replay.add({state, a, step.reward, step.next, step.terminal});
        if (step.terminal || ++t >= mdp.horizon()) {
            state = mdp.start_state();
            t = 0;
        } else {
            state = step.next;
        }
        if (replay.size() < warmup) continue;
        const auto batch = replay.sample(cfg.batch_size);
        const auto diag = agent.update(mdp, batch);
        ++done;
        if (on_log && ((opts.log_every != 0 && done % opts.log_every == 0) || done == opts.updates)) on_log(diag);
    }
}

} // namespace fqf::rl
