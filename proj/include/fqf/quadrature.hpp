#pragma once

#include <cmath>
#include <optional>

namespace fqf::quadrature {

struct SimpsonOptions {
    double abs_tol = 1e-8;
    int max_depth = 40;
};

namespace detail {

template <class Func>
std::optional<double> simpson_recurse(const Func& f, double a, double b, double fa, double fm, double fb,
                                      double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (!std::isfinite(delta)) return std::nullopt;
    // Interval collapsed to floating-point resolution; nothing left to refine.
    if (lm <= a || rm >= b) return left + right + delta / 15.0;
    if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth <= 0) return std::nullopt;
    auto l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    if (!l) return std::nullopt;
    auto r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    if (!r) return std::nullopt;
    return *l + *r;
}

} // namespace detail

/// Adaptive composite Simpson rule with Richardson correction.
/// Returns nullopt when the tolerance is not met within max_depth bisections
/// or the integrand produces a non-finite value.
template <class Func>
std::optional<double> adaptive_simpson(const Func& f, double a, double b, const SimpsonOptions& opts = {}) {
    if (b == a) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_recurse(f, a, b, fa, fm, fb, whole, opts.abs_tol, opts.max_depth);
}

} // namespace fqf::quadrature
