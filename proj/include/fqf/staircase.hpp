#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fqf/error.hpp"

namespace fqf {

/// Ordered fractions 0 = tau_0 < tau_1 < ... < tau_N = 1 splitting [0,1] into N segments.
class FractionSet {
public:
    /// Builds from the N-1 interior fractions. An empty list gives the single segment [0,1].
    explicit FractionSet(std::span<const double> interior) {
        bounds_.reserve(interior.size() + 2);
        bounds_.push_back(0.0);
        for (double t : interior) {
            if (!std::isfinite(t) || !(t > 0.0 && t < 1.0))
                throw InvalidArgument("fraction set: interior fractions must lie strictly inside (0,1)");
            if (!(t > bounds_.back())) throw InvalidArgument("fraction set: fractions must be strictly increasing");
            bounds_.push_back(t);
        }
        bounds_.push_back(1.0);
    }

    FractionSet(std::initializer_list<double> interior) : FractionSet(std::span<const double>(interior.begin(), interior.size())) {}

    static FractionSet equally_spaced(std::size_t segments) {
        if (segments == 0) throw InvalidArgument("fraction set: needs at least one segment");
        std::vector<double> interior(segments - 1);
        for (std::size_t i = 1; i < segments; ++i)
            interior[i - 1] = static_cast<double>(i) / static_cast<double>(segments);
        return FractionSet(interior);
    }

    std::size_t segments() const noexcept { return bounds_.size() - 1; }

    /// tau_i for i in [0, N].
    double tau(std::size_t i) const { return bounds_.at(i); }

    /// (tau_i + tau_{i+1}) / 2 for i in [0, N).
    double midpoint(std::size_t i) const { return 0.5 * (bounds_.at(i) + bounds_.at(i + 1)); }

    double width(std::size_t i) const { return bounds_.at(i + 1) - bounds_.at(i); }

    std::span<const double> boundaries() const noexcept { return bounds_; }

    std::span<const double> interior() const noexcept {
        return std::span<const double>(bounds_).subspan(1, bounds_.size() - 2);
    }

    std::vector<double> midpoints() const {
        std::vector<double> m(segments());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = midpoint(i);
        return m;
    }

    double min_width() const {
        double w = 1.0;
        for (std::size_t i = 0; i < segments(); ++i) w = std::min(w, width(i));
        return w;
    }

    bool operator==(const FractionSet&) const = default;

private:
    std::vector<double> bounds_;
};

/// A staircase quantile function: value theta_i on [tau_i, tau_{i+1}).
/// Equivalently the Dirac mixture sum_i (tau_{i+1} - tau_i) delta_{theta_i}.
class StaircaseApproximation {
public:
    StaircaseApproximation(FractionSet fractions, std::vector<double> values)
        : fractions_(std::move(fractions)), values_(std::move(values)) {
        if (values_.size() != fractions_.segments())
            throw InvalidArgument("staircase: expected " + std::to_string(fractions_.segments()) + " values, got " +
                                  std::to_string(values_.size()));
        for (double v : values_)
            if (!std::isfinite(v)) throw InvalidArgument("staircase: values must be finite");
    }

    const FractionSet& fractions() const noexcept { return fractions_; }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t segments() const noexcept { return values_.size(); }

private:
    FractionSet fractions_;
    std::vector<double> values_;
};

/// Right-continuous staircase evaluated at omega; H(0) = 1, so omega = tau_i returns theta_i.
inline double project_cdf(const StaircaseApproximation& approx, double omega) {
    if (!(omega >= 0.0 && omega <= 1.0)) throw InvalidArgument("project_cdf: omega outside [0,1]");
    const auto b = approx.fractions().boundaries();
    auto it = std::upper_bound(b.begin(), b.end(), omega);
    auto seg = static_cast<std::size_t>(it - b.begin());
    seg = std::clamp<std::size_t>(seg, 1, approx.segments()) - 1;
    return approx.values()[seg];
}

} // namespace fqf
