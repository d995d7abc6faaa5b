#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fqf/quadrature.hpp"
#include "fqf/quantile_function.hpp"
#include "fqf/quantile_loss.hpp"
#include "fqf/value_net.hpp"
#include "fqf/wasserstein.hpp"

namespace fqf::gradcheck {

inline constexpr double kTolerance = 1e-4;
inline constexpr quadrature::SimpsonOptions kAuditIntegration{1e-12, 60};

struct AuditResult {
    double max_rel_error = 0.0;
    double max_abs_gradient = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;

    bool passed() const noexcept { return max_rel_error < kTolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
    return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

/// Random target from the continuous kinds (uniform, gaussian, exponential,
/// truncated gaussian, tabular).
inline QuantileFunction random_target(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0: {
        const double a = -2.0 + 4.0 * u(rng);
        return QuantileFunction::uniform(a, a + 0.1 + 3.0 * u(rng));
    }
    case 1: return QuantileFunction::gaussian(-1.0 + 2.0 * u(rng), 0.2 + 2.0 * u(rng));
    case 2: return QuantileFunction::exponential(0.3 + 3.0 * u(rng));
    case 3: {
        const double lo = -3.0 + 2.0 * u(rng);
        return QuantileFunction::truncated_gaussian(-0.5 + u(rng), 0.3 + u(rng), lo, lo + 1.0 + 3.0 * u(rng));
    }
    default: {
        std::vector<double> f{0.0}, v{-1.0 + 2.0 * u(rng)};
        for (int k = 1; k < 5; ++k) f.push_back(f.back() + 0.05 + u(rng));
        for (auto& x : f) x /= f.back();
        f.back() = 1.0;
        for (int k = 1; k < 5; ++k) v.push_back(v.back() + 0.05 + 2.0 * u(rng));
        return QuantileFunction::tabular(f, v);
    }
    }
}

/// Sorted interior fractions with every segment at least `min_gap` wide.
inline FractionSet random_fractions(std::mt19937_64& rng, std::size_t segments, double min_gap) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double free = 1.0 - min_gap * static_cast<double>(segments);
    std::vector<double> w(segments);
    double total = 0.0;
    for (auto& x : w) total += (x = -std::log(1.0 - u(rng)));
    std::vector<double> interior;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < segments; ++i) interior.push_back(acc += min_gap + free * w[i] / total);
    return FractionSet(interior);
}

/// Closed-form dW1/dtau against central differences of W1 (values at their
/// optimum) on `pairs` random (target, fraction set) pairs, N in [2, 8].
inline AuditResult fraction_gradient_audit(std::uint64_t seed, std::size_t pairs, bool inject_sign_flip = false,
                                           double h = 1e-5) {
    std::mt19937_64 rng(seed);
    AuditResult result;
    for (std::size_t p = 0; p < pairs; ++p) {
        const auto qf = random_target(rng);
        const auto n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
        const auto fs = random_fractions(rng, n, 0.02);
        auto analytic = w1_fraction_gradient(qf, fs);
        if (inject_sign_flip) analytic[0] = -analytic[0];
        std::vector<double> interior(fs.interior().begin(), fs.interior().end());
        for (std::size_t i = 0; i < interior.size(); ++i) {
            auto up = interior, down = interior;
            up[i] += h;
            down[i] -= h;
            const double fd = (w1_at_optimal_values(qf, FractionSet(up), kAuditIntegration) -
                               w1_at_optimal_values(qf, FractionSet(down), kAuditIntegration)) /
                              (2 * h);
            result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], fd, 1e-3));
            result.max_abs_gradient = std::max(result.max_abs_gradient, std::fabs(analytic[i]));
            ++result.checked;
        }
    }
    return result;
}

struct BackpropAuditOptions {
    NetShape shape{3, 8, 16, 2};
    std::size_t batch = 4;
    std::size_t fractions = 5;
    std::size_t parameters = 200;
    double h = 1e-5;
    bool zero_net = false;
    bool inject_sign_flip = false;
};

/// Manual backward pass of the quantile-Huber loss through the value network
/// against central differences on randomly chosen parameters. Parameters whose
/// perturbation flips any ReLU activation, or moves a TD error across 0 or
/// across the Huber threshold, are skipped.
inline AuditResult backprop_gradient_audit(std::uint64_t seed, const BackpropAuditOptions& opts = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    auto net = QuantileValueNet::initialized(opts.shape, rng, 1.0);
    for (auto& p : net.parameters())
        for (auto& x : p.data) x = opts.zero_net ? 0.0 : x + 0.3 * g(rng);

    struct Sample {
        std::vector<double> state, mids, target;
        std::size_t action;
        double reward;
    };
    std::vector<Sample> batch(opts.batch);
    for (auto& s : batch) {
        s.state.resize(opts.shape.state_dim);
        for (auto& x : s.state) x = g(rng);
        s.mids = random_fractions(rng, opts.fractions, 0.0).midpoints();
        s.target.resize(opts.fractions);
        for (auto& x : s.target) x = opts.zero_net ? 0.0 : g(rng);
        s.action = std::uniform_int_distribution<std::size_t>(0, opts.shape.actions - 1)(rng);
        s.reward = opts.zero_net ? 0.0 : g(rng);
    }
    const HuberParams huber(1.0);
    auto loss = [&] {
        double total = 0.0;
        for (const auto& s : batch)
            total += quantile_loss(td_error_matrix(s.reward, 0.9, s.target, net.quantiles(s.state, s.mids, s.action)),
                                   s.mids, huber);
        return total;
    };
    auto pattern = [&] {
        std::vector<bool> bits;
        for (const auto& s : batch) {
            const auto fp = net.forward(s.state, s.mids);
            for (double v : fp.psi_pre) bits.push_back(v > 0.0);
            for (double v : fp.phi_pre.data) bits.push_back(v > 0.0);
            std::vector<double> current(s.mids.size());
            for (std::size_t t = 0; t < current.size(); ++t) current[t] = fp.out(t, s.action);
            for (double d : td_error_matrix(s.reward, 0.9, s.target, current).data) {
                bits.push_back(d > 0.0);
                bits.push_back(d < 0.0);
                bits.push_back(std::fabs(d) <= huber.kappa);
            }
        }
        return bits;
    };

    auto grads = net.zero_gradients();
    for (const auto& s : batch) {
        const auto fp = net.forward(s.state, s.mids);
        std::vector<double> current(s.mids.size());
        for (std::size_t t = 0; t < current.size(); ++t) current[t] = fp.out(t, s.action);
        const auto dcur = quantile_loss_current_gradient(td_error_matrix(s.reward, 0.9, s.target, current), s.mids, huber);
        Matrix up(s.mids.size(), opts.shape.actions);
        for (std::size_t t = 0; t < current.size(); ++t) up(t, s.action) = dcur[t];
        net.backward(fp, up, grads);
    }
    if (opts.inject_sign_flip)
        for (auto& x : grads[QuantileValueNet::HeadB].data) x = -x;

    AuditResult result;
    const auto base = pattern();
    std::size_t total = 0;
    for (const auto& p : net.parameters()) total += p.size();
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    if (opts.inject_sign_flip)
        for (std::size_t i = 0; i < opts.shape.actions; ++i) picks.emplace_back(QuantileValueNet::HeadB, i);
    std::uniform_int_distribution<std::size_t> flat(0, total - 1);
    while (picks.size() < opts.parameters) {
        std::size_t idx = flat(rng), k = 0;
        while (idx >= net.parameters()[k].size()) idx -= net.parameters()[k++].size();
        picks.emplace_back(k, idx);
    }
    for (auto [k, i] : picks) {
        auto& x = net.parameters()[k].data[i];
        const double saved = x;
        x = saved + opts.h;
        const double up = loss();
        const bool up_same = pattern() == base;
        x = saved - opts.h;
        const double down = loss();
        const bool down_same = pattern() == base;
        x = saved;
        if (!up_same || !down_same) {
            ++result.skipped;
            continue;
        }
        const double fd = (up - down) / (2 * opts.h);
        const double analytic = grads[k].data[i];
        result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, fd, 1e-6));
        result.max_abs_gradient = std::max(result.max_abs_gradient, std::fabs(analytic));
        ++result.checked;
    }
    return result;
}

} // namespace fqf::gradcheck
