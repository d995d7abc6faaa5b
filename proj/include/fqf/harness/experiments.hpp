#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fqf/checkpoint.hpp"
#include "fqf/error.hpp"
#include "fqf/fraction_engine.hpp"
#include "fqf/gradcheck.hpp"
#include "fqf/harness/config.hpp"
#include "fqf/harness/csv.hpp"
#include "fqf/rl/agent.hpp"
#include "fqf/wasserstein.hpp"

namespace fqf::harness {

struct RunOptions {
    bool quiet = true;
};

namespace detail {

class Stopwatch {
public:
    explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        if (!enabled_) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    bool enabled_;
    std::chrono::steady_clock::time_point start_;
};

inline void progress(const RunOptions& opts, const std::string& msg) {
    if (!opts.quiet) std::cerr << msg << '\n';
}

inline FractionSet random_sorted_fractions(std::size_t segments, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (true) {
        std::vector<double> interior(segments - 1);
        for (auto& v : interior) v = u(rng);
        std::sort(interior.begin(), interior.end());
        try {
            return FractionSet(interior);
        } catch (const InvalidArgument&) {
        }
    }
}

} // namespace detail

/// Creates the directory and checks that a file can be written into it.
inline std::filesystem::path prepare_output_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    const auto probe = p / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw InvalidArgument("output directory is not writable: " + dir);
    }
    std::filesystem::remove(probe, ec);
    return p;
}

inline std::string results_path(const ExperimentConfig& cfg) {
    return (prepare_output_dir(cfg.output_dir) / (cfg.id + ".csv")).string();
}

/// Mean W1 (Lemma-1 values) over `draws` random sorted fraction sets.
inline double random_fraction_w1_mean(const QuantileFunction& qf, std::size_t segments, std::size_t draws,
                                      std::mt19937_64& rng) {
    double total = 0.0;
    for (std::size_t k = 0; k < draws; ++k)
        total += w1_at_optimal_values(qf, detail::random_sorted_fractions(segments, rng));
    return total / static_cast<double>(draws);
}

/// Rows w1_optimized / w1_equal / w1_random_mean per (distribution, N, seed).
inline void run_approx_benchmark(const ExperimentConfig& cfg, CsvWriter& out, const RunOptions& opts = {}) {
    const detail::Stopwatch clock(cfg.record_wall_clock);
    for (const auto& spec : cfg.distributions) {
        const auto qf = make_distribution(spec);
        for (auto n : cfg.N) {
            const std::string id = cfg.id + ":" + spec.label + ":N=" + std::to_string(n);
            for (auto seed : cfg.seeds) {
                detail::progress(opts, "approx " + id + " seed " + std::to_string(seed));
                const double equal = w1_at_optimal_values(qf, FractionSet::equally_spaced(n));
                double optimized = equal;
                if (n >= 2) {
                    OptimizerState state(cfg.step_size, cfg.decay);
                    optimized = optimize_fractions(qf, n, cfg.steps, state, cfg.entropy_coeff, {0}).trace.back().w1;
                }
                std::mt19937_64 rng(seed);
                const double random_mean = random_fraction_w1_mean(qf, n, cfg.random_draws, rng);
                out.write({id, seed, cfg.steps, "w1_optimized", optimized, clock.ms()});
                out.write({id, seed, 0, "w1_equal", equal, clock.ms()});
                out.write({id, seed, 0, "w1_random_mean", random_mean, clock.ms()});
            }
        }
    }
}

/// Optimization traces from a seeded random start (logits ~ N(0, 0.5^2)).
inline void run_optimize(const ExperimentConfig& cfg, CsvWriter& out, const RunOptions& opts = {}) {
    const detail::Stopwatch clock(cfg.record_wall_clock);
    for (const auto& spec : cfg.distributions) {
        const auto qf = make_distribution(spec);
        for (auto n : cfg.N) {
            if (n < 2) throw InvalidArgument("optimize: N must be at least 2");
            const std::string id = cfg.id + ":" + spec.label + ":N=" + std::to_string(n);
            for (auto seed : cfg.seeds) {
                detail::progress(opts, "optimize " + id + " seed " + std::to_string(seed));
                std::mt19937_64 rng(seed);
                std::normal_distribution<double> g(0.0, 0.5);
                FractionProposer start{std::vector<double>(n), cfg.entropy_coeff};
                for (auto& l : start.logits) l = g(rng);
                OptimizerState state(cfg.step_size, cfg.decay);
                const auto r = optimize_fractions(qf, start, cfg.steps, state, {cfg.log_every});
                for (const auto& p : r.trace) out.write({id, seed, p.step, "w1", p.w1, clock.ms()});
                out.write({id, seed, cfg.steps, "min_width", r.fractions.min_width(), clock.ms()});
                out.write({id, seed, cfg.steps, "entropy", r.proposer.entropy(), clock.ms()});
            }
        }
    }
}

/// Returns true when every audited relative error is below 1e-4.
inline bool run_gradcheck(const ExperimentConfig& cfg, CsvWriter& out, const RunOptions& opts = {}) {
    const detail::Stopwatch clock(cfg.record_wall_clock);
    bool ok = true;
    for (auto seed : cfg.seeds) {
        detail::progress(opts, "gradcheck seed " + std::to_string(seed));
        const auto frac = gradcheck::fraction_gradient_audit(seed, cfg.pairs, cfg.inject_sign_flip);
        out.write({cfg.id + ":fraction", seed, 0, "max_rel_error", frac.max_rel_error, clock.ms()});
        out.write({cfg.id + ":fraction", seed, 0, "checked", static_cast<double>(frac.checked), clock.ms()});
        gradcheck::BackpropAuditOptions bo;
        bo.parameters = cfg.backprop_params;
        bo.zero_net = cfg.zero_net;
        bo.inject_sign_flip = cfg.inject_sign_flip;
        const auto bp = gradcheck::backprop_gradient_audit(seed, bo);
        out.write({cfg.id + ":backprop", seed, 0, "max_rel_error", bp.max_rel_error, clock.ms()});
        out.write({cfg.id + ":backprop", seed, 0, "max_abs_gradient", bp.max_abs_gradient, clock.ms()});
        out.write({cfg.id + ":backprop", seed, 0, "checked", static_cast<double>(bp.checked), clock.ms()});
        out.write({cfg.id + ":backprop", seed, 0, "skipped_kink", static_cast<double>(bp.skipped), clock.ms()});
        ok = ok && frac.passed() && bp.passed();
    }
    return ok;
}

/// W1 between the agent's staircase at (start state, greedy action) and a
/// Monte-Carlo return distribution under the agent's evaluation policy.
inline double w1_vs_monte_carlo(const rl::ToyMDP& mdp, const rl::Agent& agent, std::size_t draws, rl::Rng& rng) {
    const auto s0 = mdp.start_state();
    const auto x = mdp.features(s0);
    const auto a = rl::argmax_lowest(agent.q_values(x));
    const auto truth = rl::true_return_distribution(mdp, agent.policy(mdp, agent.config().epsilon_eval), s0, a, draws, rng);
    const auto est = agent.quantile_estimate(x, a);
    return w1_error(truth, StaircaseApproximation(est.fractions, est.values));
}

/// Learning curves for one agent kind over the configured seeds, plus a
/// checkpoint per seed. A numerical failure writes a diagnostics row and rethrows.
inline void run_train(const ExperimentConfig& cfg, CsvWriter& out, const RunOptions& opts = {}) {
    const detail::Stopwatch clock(cfg.record_wall_clock);
    const auto mdp = cfg.make_environment();
    const auto agent_cfg = cfg.agent_for(mdp);
    const auto dir = prepare_output_dir(cfg.output_dir);
    const std::string id = cfg.id + ":" + rl::to_string(agent_cfg.kind);
    const std::size_t eval_every = cfg.eval_every == 0 ? cfg.updates : cfg.eval_every;
    const auto x0 = mdp.features(mdp.start_state());
    for (auto seed : cfg.seeds) {
        detail::progress(opts, "train " + id + " seed " + std::to_string(seed));
        rl::Agent agent(mdp, agent_cfg, seed);
        auto evaluate = [&](std::size_t step) {
            rl::Rng eval_rng(seed + 0x5bd1e995ULL * (step + 1));
            const auto stats = rl::evaluate_policy(mdp, agent, cfg.eval_episodes, agent_cfg.epsilon_eval, eval_rng);
            out.write({id, seed, step, "eval_return", stats.mean, clock.ms()});
            out.write({id, seed, step, "eval_return_stderr", stats.stderr_, clock.ms()});
            out.write({id, seed, step, "w1_vs_mc", w1_vs_monte_carlo(mdp, agent, cfg.mc_draws, eval_rng), clock.ms()});
        };
        std::size_t last = 0;
        try {
            rl::train(mdp, agent, {cfg.updates, cfg.log_every == 0 ? cfg.updates : cfg.log_every}, seed,
                      [&](const rl::UpdateDiagnostics& d) {
                          last = d.update;
                          out.write({id, seed, d.update, "loss", d.loss, clock.ms()});
                          if (agent_cfg.kind == rl::AgentKind::FQF)
                              out.write({id, seed, d.update, "mean_abs_fraction_grad", d.mean_abs_fraction_grad, clock.ms()});
                          out.write({id, seed, d.update, "monotonicity_violation_rate", d.monotonicity_violation_rate,
                                     clock.ms()});
                          const auto q = agent.q_values(x0);
                          for (std::size_t a = 0; a < q.size(); ++a)
                              out.write({id, seed, d.update, "q_a" + std::to_string(a), q[a], clock.ms()});
                          if (d.update % eval_every == 0 || d.update == cfg.updates) evaluate(d.update);
                      });
        } catch (const NumericalError& e) {
            out.write({id, seed, last + 1, "numerical_failure", std::nan(""), clock.ms()});
            throw;
        }
        nlohmann::json extra{{"environment", mdp.name()},
                             {"agent_kind", rl::to_string(agent_cfg.kind)},
                             {"N", agent_cfg.N},
                             {"seed", seed},
                             {"updates", agent.updates()}};
        save_checkpoint((dir / (cfg.id + "_" + rl::to_string(agent_cfg.kind) + "_seed" + std::to_string(seed) + ".ckpt.json"))
                            .string(),
                        make_checkpoint(agent.online(), agent.proposer_tensors(), extra));
    }
}

/// Worker count: QF_THREADS if set (>= 1), else hardware concurrency.
inline std::size_t worker_count(std::size_t cells) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("QF_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v < 1) throw InvalidArgument("QF_THREADS must be a positive integer");
            n = static_cast<std::size_t>(v);
        } catch (const std::logic_error&) {
            throw InvalidArgument(std::string("QF_THREADS must be a positive integer, got '") + env + "'");
        }
    }
    return std::max<std::size_t>(1, std::min(n, cells));
}

/// Splits the configuration into cells (agent kind x seed for train, one seed
/// per cell for approx), runs them on a worker pool with one file per cell,
/// then concatenates the cell files in cell order into <output_dir>/<id>.csv.
inline void run_sweep(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    std::vector<ExperimentConfig> cells;
    const auto cell_dir = prepare_output_dir((std::filesystem::path(cfg.output_dir) / "cells").string());
    if (cfg.base_kind == ExperimentKind::Train) {
        auto kinds = cfg.agent_kinds;
        if (kinds.empty()) kinds.push_back(cfg.agent.kind);
        for (auto kind : kinds) {
            for (auto seed : cfg.seeds) {
                auto c = cfg;
                c.kind = ExperimentKind::Train;
                c.agent.kind = kind;
                c.seeds = {seed};
                c.id = cfg.id + "_" + rl::to_string(kind) + "_seed" + std::to_string(seed);
                c.output_dir = cell_dir.string();
                cells.push_back(std::move(c));
            }
        }
    } else {
        for (auto seed : cfg.seeds) {
            auto c = cfg;
            c.kind = ExperimentKind::Approx;
            c.seeds = {seed};
            c.id = cfg.id + "_seed" + std::to_string(seed);
            c.output_dir = cell_dir.string();
            cells.push_back(std::move(c));
        }
    }

    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
            try {
                CsvWriter out(results_path(cells[i]));
                if (cells[i].kind == ExperimentKind::Train) run_train(cells[i], out, opts);
                else run_approx_benchmark(cells[i], out, opts);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < worker_count(cells.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const auto merged_path = results_path(cfg);
    std::ofstream merged(merged_path, std::ios::binary | std::ios::trunc);
    if (!merged) throw InvalidArgument("cannot open output file for writing: " + merged_path);
    merged << kCsvHeader << '\n';
    for (const auto& c : cells) {
        std::ifstream in(results_path(c), std::ios::binary);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) merged << line << '\n';
    }
}

} // namespace fqf::harness
