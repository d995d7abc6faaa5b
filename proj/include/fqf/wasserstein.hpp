#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fqf/error.hpp"
#include "fqf/quadrature.hpp"
#include "fqf/quantile_function.hpp"
#include "fqf/staircase.hpp"

namespace fqf {

namespace detail {

// Smallest omega in [a, b] with qf(omega) >= level, to double resolution.
inline double crossing_point(const QuantileFunction& qf, double a, double b, double level) {
    if (qf(a) >= level) return a;
    if (qf(b) < level) return b;
    double lo = a;
    double hi = b;
    while (true) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (qf(mid) >= level ? hi : lo) = mid;
    }
    return hi;
}

} // namespace detail

/// Integral over [a, b] of |F^-1(omega) - theta|.
///
/// The interval is split where F^-1 crosses theta and at every jump or kink of
/// qf, so the adaptive Simpson rule only sees smooth pieces. `opts.abs_tol` is
/// the budget for the whole interval; `segment` labels integration failures.
inline double segment_w1(const QuantileFunction& qf, double a, double b, double theta,
                         const quadrature::SimpsonOptions& opts = {}, std::size_t segment = 0) {
    if (!(b > a)) return 0.0;
    std::vector<double> cuts = qf.breakpoints_in(a, b);
    const double cross = detail::crossing_point(qf, a, b, theta);
    if (cross > a && cross < b) cuts.push_back(cross);
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double lo = cuts[k];
        const double hi = cuts[k + 1];
        // Endpoints take the one-sided limits from inside the piece, so a jump
        // sitting exactly on a cut does not leak into the neighbouring piece.
        const double inner_lo = std::min(std::nextafter(lo, hi), 0.5 * (lo + hi));
        const double inner_hi = std::max(std::nextafter(hi, lo), 0.5 * (lo + hi));
        auto integrand = [&](double w) { return std::fabs(qf(std::clamp(w, inner_lo, inner_hi)) - theta); };
        quadrature::SimpsonOptions piece = opts;
        piece.abs_tol = opts.abs_tol * (hi - lo) / (b - a);
        auto v = quadrature::adaptive_simpson(integrand, lo, hi, piece);
        if (!v) throw IntegrationError(segment, "adaptive Simpson did not converge");
        total += *v;
    }
    return total;
}

/// 1-Wasserstein distance between qf and a staircase:
///   sum_i  integral over [tau_i, tau_{i+1}] of |F^-1(omega) - theta_i|,
/// with an absolute tolerance of `opts.abs_tol` per segment.
inline double w1_error(const QuantileFunction& qf, const StaircaseApproximation& approx,
                       const quadrature::SimpsonOptions& opts = {}) {
    const auto& fs = approx.fractions();
    double total = 0.0;
    for (std::size_t i = 0; i < approx.segments(); ++i)
        total += segment_w1(qf, fs.tau(i), fs.tau(i + 1), approx.values()[i], opts, i);
    return total;
}

/// Values minimizing W1 for fixed fractions: theta_i = F^-1(midpoint_i).
inline StaircaseApproximation optimal_values(const QuantileFunction& qf, const FractionSet& fractions) {
    std::vector<double> theta(fractions.segments());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = qf(fractions.midpoint(i));
    return StaircaseApproximation(fractions, std::move(theta));
}

/// Convenience: W1 with values pinned to the optimum for the given fractions.
inline double w1_at_optimal_values(const QuantileFunction& qf, const FractionSet& fractions,
                                   const quadrature::SimpsonOptions& opts = {}) {
    return w1_error(qf, optimal_values(qf, fractions), opts);
}

/// d W1 / d tau_i = 2 F^-1(tau_i) - F^-1(midpoint_i) - F^-1(midpoint_{i-1}) for i = 1..N-1,
/// with values held at their optimum. Index 0 of the result corresponds to tau_1.
inline std::vector<double> w1_fraction_gradient(const QuantileFunction& qf, const FractionSet& fractions) {
    const std::size_t n = fractions.segments();
    std::vector<double> grad(n - 1);
    double prev_mid = qf(fractions.midpoint(0));
    for (std::size_t i = 1; i < n; ++i) {
        const double mid = qf(fractions.midpoint(i));
        grad[i - 1] = 2.0 * qf(fractions.tau(i)) - mid - prev_mid;
        prev_mid = mid;
    }
    return grad;
}

} // namespace fqf
