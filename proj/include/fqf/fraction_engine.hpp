#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fqf/error.hpp"
#include "fqf/quadrature.hpp"
#include "fqf/quantile_function.hpp"
#include "fqf/staircase.hpp"
#include "fqf/wasserstein.hpp"

namespace fqf {

/// Every softmax probability is lifted by this much (and the rest shrunk to
/// keep the sum at 1) so cumulative sums stay strictly increasing in double
/// precision even when some logits are far below the others.
inline constexpr double kProbabilityFloor = 1e-12;

/// Logit magnitude past which optimization is treated as diverged.
inline constexpr double kLogitLimit = 50.0;

/// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw InvalidArgument("softmax: needs at least one logit");
    double top = -std::numeric_limits<double>::infinity();
    for (double l : logits) {
        if (!std::isfinite(l)) throw InvalidArgument("softmax: logits must be finite");
        top = std::max(top, l);
    }
    std::vector<double> s(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += (s[i] = std::exp(logits[i] - top));
    for (auto& x : s) x /= total;
    return s;
}

/// Softmax with the probability floor applied: q = s + floor * (1 - N s).
/// Equal logits give exactly 1/N when N is a power of two.
inline std::vector<double> floored_softmax(std::span<const double> logits) {
    auto q = softmax(logits);
    const double n = static_cast<double>(q.size());
    for (auto& x : q) x += kProbabilityFloor * (1.0 - n * x);
    return q;
}

/// Cumulative sums of q: tau_i = sum_{j<i} q_j for i = 1..N-1.
inline FractionSet cumulative_fractions(std::span<const double> q) {
    std::vector<double> interior(q.size() - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < q.size(); ++i) interior[i] = (acc += q[i]);
    return FractionSet(interior);
}

/// Parameterizes a fraction set by N logits through a cumulative softmax.
struct FractionProposer {
    std::vector<double> logits;
    double entropy_coeff = 0.0;

    static FractionProposer uniform(std::size_t segments, double entropy_coeff = 0.0) {
        if (segments == 0) throw InvalidArgument("proposer: needs at least one segment");
        return FractionProposer{std::vector<double>(segments, 0.0), entropy_coeff};
    }

    std::size_t segments() const noexcept { return logits.size(); }

    std::vector<double> probabilities() const { return floored_softmax(logits); }

    FractionSet fractions() const { return cumulative_fractions(probabilities()); }

    /// H(q) = -sum q_i ln q_i.
    double entropy() const {
        double h = 0.0;
        for (double x : probabilities()) h -= x * std::log(x);
        return h;
    }

    /// Gradient w.r.t. the logits of  sum_i g_i tau_i - entropy_coeff * H(q),
    /// where g = tau_grad holds one entry per interior fraction.
    std::vector<double> logit_gradient(std::span<const double> tau_grad) const {
        const std::size_t n = segments();
        if (tau_grad.size() + 1 != n)
            throw InvalidArgument("logit_gradient: expected " + std::to_string(n - 1) + " fraction gradients, got " +
                                  std::to_string(tau_grad.size()));
        const auto s = softmax(logits);
        const double scale = 1.0 - static_cast<double>(n) * kProbabilityFloor;

        // d tau_i / d logit_k = scale * s_k (1{k<i} - S_i), S_i = sum_{j<i} s_j.
        // Sum over i of g_i * that, using suffix sums of g for the indicator part.
        std::vector<double> grad(n, 0.0);
        double weighted_s = 0.0;  // sum_i g_i S_i
        double partial = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            partial += s[i - 1];
            weighted_s += tau_grad[i - 1] * partial;
        }
        double suffix = 0.0;  // sum_{i > k} g_i
        for (std::size_t k = n; k-- > 0;) {
            grad[k] = scale * s[k] * (suffix - weighted_s);
            if (k >= 1) suffix += tau_grad[k - 1];
        }

        if (entropy_coeff != 0.0) {
            // dH/dlogit_k = -scale * s_k (ln q_k - sum_j s_j ln q_j)
            const auto q = probabilities();
            double mean_log = 0.0;
            for (std::size_t j = 0; j < n; ++j) mean_log += s[j] * std::log(q[j]);
            for (std::size_t k = 0; k < n; ++k)
                grad[k] += entropy_coeff * scale * s[k] * (std::log(q[k]) - mean_log);
        }
        return grad;
    }
};

inline FractionSet fractions_from_logits(const FractionProposer& proposer) { return proposer.fractions(); }

inline double entropy(const FractionProposer& proposer) { return proposer.entropy(); }

inline std::vector<double> logit_gradient(const FractionProposer& proposer, std::span<const double> tau_grad) {
    return proposer.logit_gradient(tau_grad);
}

/// RMSProp-style rule. The per-parameter mean-square accumulator is bias
/// corrected and the normalizer is its running maximum, so the step shrinks
/// with the gradient near a stationary point.
struct OptimizerState {
    double step_size = 0.05;
    double decay = 0.95;
    double epsilon = 1e-8;
    std::vector<double> mean_square;
    std::vector<double> max_mean_square;
    std::size_t iteration = 0;

    explicit OptimizerState(double step = 0.05, double decay_rate = 0.95, double eps = 1e-8)
        : step_size(step), decay(decay_rate), epsilon(eps) {
        if (!(step_size > 0)) throw InvalidArgument("optimizer: step size must be positive");
        if (!(decay >= 0 && decay < 1)) throw InvalidArgument("optimizer: decay must lie in [0,1)");
    }

    /// params -= step_size * grad / (sqrt(max bias-corrected mean square) + epsilon)
    void apply(std::span<double> params, std::span<const double> grad) {
        if (params.size() != grad.size()) throw InvalidArgument("optimizer: parameter/gradient size mismatch");
        if (mean_square.empty()) {
            mean_square.assign(params.size(), 0.0);
            max_mean_square.assign(params.size(), 0.0);
        } else if (mean_square.size() != params.size()) {
            throw InvalidArgument("optimizer: parameter count changed between steps");
        }
        ++iteration;
        const double correction = 1.0 - std::pow(decay, static_cast<double>(iteration));
        for (std::size_t k = 0; k < params.size(); ++k) {
            mean_square[k] = decay * mean_square[k] + (1.0 - decay) * grad[k] * grad[k];
            max_mean_square[k] = std::max(max_mean_square[k], mean_square[k] / correction);
            params[k] -= step_size * grad[k] / (std::sqrt(max_mean_square[k]) + epsilon);
        }
    }
};

struct TracePoint {
    std::size_t step;
    double w1;
};

struct OptimizationResult {
    FractionProposer proposer;
    FractionSet fractions;
    std::vector<TracePoint> trace;
};

struct OptimizeOptions {
    std::size_t log_every = 10;
    quadrature::SimpsonOptions integration{};
};

/// Zeroes fraction-gradient entries at the rounding level of the quantile
/// values they are built from. The optimizer normalizes step sizes, so left in
/// place such residue would be amplified into full-size steps.
inline void drop_cancellation_noise(const QuantileFunction& qf, const FractionSet& fs, std::span<double> tau_grad) {
    double scale = 0.0;
    for (std::size_t i = 0; i < fs.segments(); ++i) scale = std::max(scale, std::fabs(qf(fs.midpoint(i))));
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    for (auto& g : tau_grad)
        if (std::fabs(g) <= noise) g = 0.0;
}

/// Gradient descent on the fraction logits using only the closed-form
/// fraction gradient; W1 itself is evaluated solely for the returned trace
/// (every `log_every` steps and at the end).
inline OptimizationResult optimize_fractions(const QuantileFunction& qf, FractionProposer start, std::size_t steps,
                                             OptimizerState& state, const OptimizeOptions& opts = {}) {
    if (start.segments() < 2) throw InvalidArgument("optimize_fractions: needs N >= 2");
    if (steps == 0) throw InvalidArgument("optimize_fractions: needs at least one step");
    FractionProposer p = std::move(start);
    std::vector<TracePoint> trace;
    auto log_point = [&](std::size_t step) {
        trace.push_back({step, w1_at_optimal_values(qf, p.fractions(), opts.integration)});
    };
    for (std::size_t step = 0; step < steps; ++step) {
        if (opts.log_every != 0 && step % opts.log_every == 0) log_point(step);
        const auto fs = p.fractions();
        auto tau_grad = w1_fraction_gradient(qf, fs);
        drop_cancellation_noise(qf, fs, tau_grad);
        const auto g = p.logit_gradient(tau_grad);
        state.apply(p.logits, g);
        for (double l : p.logits)
            if (!std::isfinite(l) || std::fabs(l) > kLogitLimit)
                throw NumericalError("optimize_fractions diverged at step " + std::to_string(step + 1) +
                                     " (logit magnitude above " + std::to_string(kLogitLimit) +
                                     "); try a smaller step size");
    }
    log_point(steps);
    auto fs = p.fractions();
    return OptimizationResult{std::move(p), std::move(fs), std::move(trace)};
}

inline OptimizationResult optimize_fractions(const QuantileFunction& qf, std::size_t segments, std::size_t steps,
                                             OptimizerState& state, double entropy_coeff = 0.0,
                                             const OptimizeOptions& opts = {}) {
    return optimize_fractions(qf, FractionProposer::uniform(segments, entropy_coeff), steps, state, opts);
}

struct GridSearchResult {
    FractionSet fractions;
    double w1;
};

/// Exhaustive search over interior fractions on the grid {k * resolution},
/// values pinned at their optimum. W1 decomposes into per-segment integrals,
/// which are cached so each grid pair is integrated once.
inline GridSearchResult grid_search_oracle(const QuantileFunction& qf, std::size_t segments, double resolution,
                                           const quadrature::SimpsonOptions& integration = {}) {
    if (segments != 2 && segments != 3) throw InvalidArgument("grid_search_oracle: N must be 2 or 3");
    if (!(resolution >= 1e-4 && resolution <= 1e-2)) throw InvalidArgument("grid_search_oracle: resolution must lie in [1e-4, 1e-2]");
    const auto points = static_cast<std::size_t>(std::llround(1.0 / resolution));
    std::vector<double> grid(points + 1);
    for (std::size_t k = 0; k <= points; ++k) grid[k] = static_cast<double>(k) / static_cast<double>(points);

    // cost(a, b): integral of |F^-1 - F^-1(mid)| over [grid[a], grid[b]].
    auto cost = [&](std::size_t a, std::size_t b) {
        return segment_w1(qf, grid[a], grid[b], qf(0.5 * (grid[a] + grid[b])), integration);
    };

    GridSearchResult best{FractionSet::equally_spaced(segments), std::numeric_limits<double>::infinity()};
    if (segments == 2) {
        for (std::size_t i = 1; i < points; ++i) {
            const double w = cost(0, i) + cost(i, points);
            if (w < best.w1) best = {FractionSet{grid[i]}, w};
        }
        return best;
    }
    std::vector<double> head(points + 1), tail(points + 1);
    for (std::size_t i = 1; i < points; ++i) {
        head[i] = cost(0, i);
        tail[i] = cost(i, points);
    }
    for (std::size_t i = 1; i + 1 < points; ++i) {
        for (std::size_t j = i + 1; j < points; ++j) {
            const double w = head[i] + cost(i, j) + tail[j];
            if (w < best.w1) best = {FractionSet{grid[i], grid[j]}, w};
        }
    }
    return best;
}

} // namespace fqf
