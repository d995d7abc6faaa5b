#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fqf/error.hpp"
#include "fqf/staircase.hpp"

namespace fqf {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<double> row(std::size_t i) { return std::span<double>(data).subspan(i * cols, cols); }
    std::span<const double> row(std::size_t i) const { return std::span<const double>(data).subspan(i * cols, cols); }
};

struct HuberParams {
    double kappa = 1.0;

    explicit HuberParams(double k = 1.0) : kappa(k) {
        if (!(kappa > 0)) throw InvalidArgument("huber: kappa must be positive");
    }
};

/// Huber function L_kappa: quadratic inside |delta| <= kappa, linear outside.
inline double huber(double delta, double kappa) {
    const double a = std::fabs(delta);
    return a <= kappa ? 0.5 * delta * delta : kappa * (a - 0.5 * kappa);
}

/// rho_tau^kappa(delta) = |tau - 1{delta < 0}| * L_kappa(delta) / kappa.
inline double quantile_huber(double delta, double tau, const HuberParams& params) {
    const double weight = std::fabs(tau - (delta < 0.0 ? 1.0 : 0.0));
    return weight * huber(delta, params.kappa) / params.kappa;
}

/// d rho_tau^kappa / d delta.
inline double quantile_huber_derivative(double delta, double tau, const HuberParams& params) {
    const double weight = std::fabs(tau - (delta < 0.0 ? 1.0 : 0.0));
    const double slope = std::fabs(delta) <= params.kappa ? delta : params.kappa * (delta < 0 ? -1.0 : 1.0);
    return weight * slope / params.kappa;
}

/// delta_ij = r + gamma * target_next[i] - current[j].
inline Matrix td_error_matrix(double reward, double gamma, std::span<const double> target_next,
                              std::span<const double> current) {
    if (target_next.size() != current.size())
        throw InvalidArgument("td_error_matrix: target and current quantile counts differ (" +
                              std::to_string(target_next.size()) + " vs " + std::to_string(current.size()) + ")");
    Matrix delta(target_next.size(), current.size());
    for (std::size_t i = 0; i < delta.rows; ++i)
        for (std::size_t j = 0; j < delta.cols; ++j) delta(i, j) = reward + gamma * target_next[i] - current[j];
    return delta;
}

/// (1/N) sum_i sum_j rho_{midpoints[j]}^kappa(delta_ij), N = number of target rows.
inline double quantile_loss(const Matrix& delta, std::span<const double> midpoints, const HuberParams& params) {
    if (midpoints.size() != delta.cols) throw InvalidArgument("quantile_loss: one midpoint per column required");
    double total = 0.0;
    for (std::size_t i = 0; i < delta.rows; ++i)
        for (std::size_t j = 0; j < delta.cols; ++j) total += quantile_huber(delta(i, j), midpoints[j], params);
    return delta.rows == 0 ? 0.0 : total / static_cast<double>(delta.rows);
}

/// d quantile_loss / d current[j]; current enters every delta_ij with sign -1.
inline std::vector<double> quantile_loss_current_gradient(const Matrix& delta, std::span<const double> midpoints,
                                                          const HuberParams& params) {
    if (midpoints.size() != delta.cols) throw InvalidArgument("quantile_loss: one midpoint per column required");
    std::vector<double> grad(delta.cols, 0.0);
    if (delta.rows == 0) return grad;
    const double inv = 1.0 / static_cast<double>(delta.rows);
    for (std::size_t i = 0; i < delta.rows; ++i)
        for (std::size_t j = 0; j < delta.cols; ++j)
            grad[j] -= inv * quantile_huber_derivative(delta(i, j), midpoints[j], params);
    return grad;
}

/// Q = sum_i (tau_{i+1} - tau_i) * quantile value at midpoint i.
inline double action_value(const FractionSet& fractions, std::span<const double> quantiles_at_midpoints) {
    if (quantiles_at_midpoints.size() != fractions.segments())
        throw InvalidArgument("action_value: expected " + std::to_string(fractions.segments()) + " quantile values");
    double q = 0.0;
    for (std::size_t i = 0; i < fractions.segments(); ++i) q += fractions.width(i) * quantiles_at_midpoints[i];
    return q;
}

} // namespace fqf
