#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "fqf/error.hpp"

namespace fqf {

/// Unbounded quantile functions are evaluated on [kTailEpsilon, 1 - kTailEpsilon].
inline constexpr double kTailEpsilon = 1e-6;

namespace qf_kind {

struct Uniform {
    double lo;
    double hi;
};

struct Gaussian {
    double mean;
    double stddev;
};

/// Gaussian restricted to [lo, hi] and renormalized.
struct TruncatedGaussian {
    double mean;
    double stddev;
    double lo;
    double hi;
    double cdf_lo;  // Phi((lo - mean) / stddev)
    double cdf_hi;
};

struct Exponential {
    double rate;
};

/// Finite support. `cumulative[k]` is P(Z <= values[k]); the last entry is 1.
struct Discrete {
    std::vector<double> values;
    std::vector<double> cumulative;
};

/// Sorted samples, linearly interpolated at plotting positions k/(n-1).
struct Empirical {
    std::vector<double> sorted;
};

/// Piecewise-linear table through (fractions[k], values[k]); fractions span [0,1].
struct Tabular {
    std::vector<double> fractions;
    std::vector<double> values;
};

} // namespace qf_kind

/// Ground-truth inverse CDF, queryable at any fraction in [0,1].
///
/// Instances are immutable; every factory validates its parameters and throws
/// InvalidArgument on NaN or out-of-domain values.
class QuantileFunction {
public:
    using Kind = std::variant<qf_kind::Uniform, qf_kind::Gaussian, qf_kind::TruncatedGaussian, qf_kind::Exponential,
                              qf_kind::Discrete, qf_kind::Empirical, qf_kind::Tabular>;

    static QuantileFunction uniform(double lo, double hi) {
        require_finite({lo, hi}, "uniform");
        if (!(lo < hi)) throw InvalidArgument("uniform: requires lo < hi");
        return QuantileFunction(qf_kind::Uniform{lo, hi});
    }

    static QuantileFunction gaussian(double mean, double stddev) {
        require_finite({mean, stddev}, "gaussian");
        if (!(stddev > 0)) throw InvalidArgument("gaussian: requires stddev > 0");
        return QuantileFunction(qf_kind::Gaussian{mean, stddev});
    }

    static QuantileFunction truncated_gaussian(double mean, double stddev, double lo, double hi) {
        require_finite({mean, stddev, lo, hi}, "truncated_gaussian");
        if (!(stddev > 0)) throw InvalidArgument("truncated_gaussian: requires stddev > 0");
        if (!(lo < hi)) throw InvalidArgument("truncated_gaussian: requires lo < hi");
        const boost::math::normal_distribution<double> n(mean, stddev);
        const double clo = boost::math::cdf(n, lo);
        const double chi = boost::math::cdf(n, hi);
        if (!(chi - clo > 1e-12)) throw InvalidArgument("truncated_gaussian: interval carries no mass");
        return QuantileFunction(qf_kind::TruncatedGaussian{mean, stddev, lo, hi, clo, chi});
    }

    static QuantileFunction exponential(double rate) {
        require_finite({rate}, "exponential");
        if (!(rate > 0)) throw InvalidArgument("exponential: requires rate > 0");
        return QuantileFunction(qf_kind::Exponential{rate});
    }

    /// Mass p1 at v1 and 1 - p1 at v2.
    static QuantileFunction two_point(double v1, double p1, double v2) {
        return discrete(std::vector<double>{v1, v2}, std::vector<double>{p1, 1.0 - p1});
    }

    static QuantileFunction discrete(std::vector<double> values, std::vector<double> probs) {
        if (values.empty() || values.size() != probs.size())
            throw InvalidArgument("discrete: values and probabilities must be non-empty and of equal length");
        require_finite(values, "discrete");
        require_finite(probs, "discrete");
        std::vector<std::size_t> order(values.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
        qf_kind::Discrete d;
        double total = 0.0;
        for (auto i : order) {
            if (!(probs[i] > 0)) throw InvalidArgument("discrete: probabilities must be positive");
            total += probs[i];
            if (!d.values.empty() && d.values.back() == values[i]) {
                d.cumulative.back() = total;
            } else {
                d.values.push_back(values[i]);
                d.cumulative.push_back(total);
            }
        }
        if (std::fabs(total - 1.0) > 1e-9) throw InvalidArgument("discrete: probabilities must sum to 1");
        d.cumulative.back() = 1.0;
        return QuantileFunction(std::move(d));
    }

    static QuantileFunction empirical(std::vector<double> samples) {
        if (samples.empty()) throw InvalidArgument("empirical: sample list is empty");
        require_finite(samples, "empirical");
        std::sort(samples.begin(), samples.end());
        return QuantileFunction(qf_kind::Empirical{std::move(samples)});
    }

    static QuantileFunction tabular(std::vector<double> fractions, std::vector<double> values) {
        if (fractions.size() < 2 || fractions.size() != values.size())
            throw InvalidArgument("tabular: needs at least two (fraction, value) rows of equal length");
        require_finite(fractions, "tabular");
        require_finite(values, "tabular");
        if (fractions.front() != 0.0 || fractions.back() != 1.0)
            throw InvalidArgument("tabular: fractions must start at 0 and end at 1");
        for (std::size_t k = 1; k < fractions.size(); ++k) {
            if (!(fractions[k] > fractions[k - 1])) throw InvalidArgument("tabular: fractions must be strictly increasing");
            if (values[k] < values[k - 1]) throw InvalidArgument("tabular: values must be non-decreasing");
        }
        return QuantileFunction(qf_kind::Tabular{std::move(fractions), std::move(values)});
    }

    /// F^-1(p) for p in [0,1]. Unbounded kinds clamp p to [kTailEpsilon, 1 - kTailEpsilon].
    double operator()(double p) const {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile function queried outside [0,1]");
        return std::visit([p](const auto& k) { return eval(k, p); }, kind_);
    }

    /// Fractions strictly inside (lo, hi) where the function has a jump or a kink.
    /// Integration splits at these so each piece is smooth.
    std::vector<double> breakpoints_in(double lo, double hi) const {
        std::vector<double> out;
        auto collect = [&](std::span<const double> knots) {
            auto first = std::upper_bound(knots.begin(), knots.end(), lo);
            for (auto it = first; it != knots.end() && *it < hi; ++it) out.push_back(*it);
        };
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, qf_kind::Discrete>) {
                    collect(std::span<const double>(k.cumulative).first(k.cumulative.size() - 1));
                } else if constexpr (std::is_same_v<T, qf_kind::Tabular>) {
                    collect(std::span<const double>(k.fractions).subspan(1, k.fractions.size() - 2));
                } else if constexpr (std::is_same_v<T, qf_kind::Empirical>) {
                    const std::size_t n = k.sorted.size();
                    if (n < 3) return;
                    const double step = 1.0 / static_cast<double>(n - 1);
                    auto first = static_cast<std::size_t>(std::floor(lo / step)) + 1;
                    for (std::size_t j = std::max<std::size_t>(first, 1); j + 1 < n; ++j) {
                        const double f = static_cast<double>(j) * step;
                        if (f <= lo) continue;
                        if (f >= hi) break;
                        out.push_back(f);
                    }
                } else if constexpr (std::is_same_v<T, qf_kind::Gaussian> || std::is_same_v<T, qf_kind::Exponential>) {
                    for (double f : {kTailEpsilon, 1.0 - kTailEpsilon})
                        if (f > lo && f < hi) out.push_back(f);
                }
            },
            kind_);
        return out;
    }

    /// False for kinds with jumps (discrete support).
    bool is_continuous() const { return !std::holds_alternative<qf_kind::Discrete>(kind_); }

    const Kind& kind() const noexcept { return kind_; }

    std::string describe() const {
        std::ostringstream os;
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, qf_kind::Uniform>)
                    os << "uniform(" << k.lo << "," << k.hi << ")";
                else if constexpr (std::is_same_v<T, qf_kind::Gaussian>)
                    os << "gaussian(" << k.mean << "," << k.stddev << ")";
                else if constexpr (std::is_same_v<T, qf_kind::TruncatedGaussian>)
                    os << "truncated_gaussian(" << k.mean << "," << k.stddev << "," << k.lo << "," << k.hi << ")";
                else if constexpr (std::is_same_v<T, qf_kind::Exponential>)
                    os << "exponential(" << k.rate << ")";
                else if constexpr (std::is_same_v<T, qf_kind::Discrete>)
                    os << "discrete(" << k.values.size() << " atoms)";
                else if constexpr (std::is_same_v<T, qf_kind::Empirical>)
                    os << "empirical(" << k.sorted.size() << " samples)";
                else
                    os << "tabular(" << k.fractions.size() << " rows)";
            },
            kind_);
        return os.str();
    }

private:
    explicit QuantileFunction(Kind k) : kind_(std::move(k)) {}

    static void require_finite(std::initializer_list<double> xs, const char* who) {
        for (double x : xs)
            if (!std::isfinite(x)) throw InvalidArgument(std::string(who) + ": parameters must be finite");
    }
    static void require_finite(std::span<const double> xs, const char* who) {
        for (double x : xs)
            if (!std::isfinite(x)) throw InvalidArgument(std::string(who) + ": parameters must be finite");
    }

    static double clamp_tail(double p) { return std::clamp(p, kTailEpsilon, 1.0 - kTailEpsilon); }

    static double eval(const qf_kind::Uniform& k, double p) { return k.lo + p * (k.hi - k.lo); }

    static double eval(const qf_kind::Gaussian& k, double p) {
        return boost::math::quantile(boost::math::normal_distribution<double>(k.mean, k.stddev), clamp_tail(p));
    }

    static double eval(const qf_kind::TruncatedGaussian& k, double p) {
        const double u = k.cdf_lo + p * (k.cdf_hi - k.cdf_lo);
        if (u <= 0.0) return k.lo;
        if (u >= 1.0) return k.hi;
        const double x = boost::math::quantile(boost::math::normal_distribution<double>(k.mean, k.stddev), u);
        return std::clamp(x, k.lo, k.hi);
    }

    static double eval(const qf_kind::Exponential& k, double p) { return -std::log1p(-clamp_tail(p)) / k.rate; }

    // inf{z : p <= F(z)}: the first atom whose cumulative mass reaches p.
    static double eval(const qf_kind::Discrete& k, double p) {
        auto it = std::lower_bound(k.cumulative.begin(), k.cumulative.end(), p);
        if (it == k.cumulative.end()) return k.values.back();
        return k.values[static_cast<std::size_t>(it - k.cumulative.begin())];
    }

    static double eval(const qf_kind::Empirical& k, double p) {
        const std::size_t n = k.sorted.size();
        if (n == 1) return k.sorted.front();
        const double pos = p * static_cast<double>(n - 1);
        const auto lo = std::min(static_cast<std::size_t>(pos), n - 2);
        const double frac = pos - static_cast<double>(lo);
        return k.sorted[lo] + frac * (k.sorted[lo + 1] - k.sorted[lo]);
    }

    static double eval(const qf_kind::Tabular& k, double p) {
        auto it = std::upper_bound(k.fractions.begin(), k.fractions.end(), p);
        auto hi = static_cast<std::size_t>(it - k.fractions.begin());
        hi = std::clamp<std::size_t>(hi, 1, k.fractions.size() - 1);
        const std::size_t lo = hi - 1;
        const double t = (p - k.fractions[lo]) / (k.fractions[hi] - k.fractions[lo]);
        return k.values[lo] + t * (k.values[hi] - k.values[lo]);
    }

    Kind kind_;
};

inline double evaluate_quantile(const QuantileFunction& qf, double p) { return qf(p); }

inline QuantileFunction empirical_quantile_from_samples(std::vector<double> samples) {
    return QuantileFunction::empirical(std::move(samples));
}

} // namespace fqf
