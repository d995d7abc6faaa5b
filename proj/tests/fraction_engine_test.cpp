#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fqf/fraction_engine.hpp"
#include "test_support.hpp"

using namespace fqf;

namespace {

double weighted_fraction_sum(const std::vector<double>& logits, const std::vector<double>& g, double entropy_coeff) {
    FractionProposer p{logits, entropy_coeff};
    const auto fs = p.fractions();
    double v = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) v += g[i] * fs.tau(i + 1);
    return v - entropy_coeff * p.entropy();
}

std::vector<QuantileFunction> smooth_suite() {
    return {QuantileFunction::uniform(0, 1), QuantileFunction::gaussian(0, 1), QuantileFunction::exponential(1),
            QuantileFunction::truncated_gaussian(0, 1, -2, 2)};
}

} // namespace

TEST(FractionsFromLogits, Examples) {
    const auto four = fractions_from_logits(FractionProposer::uniform(4));
    ASSERT_EQ(four.segments(), 4u);
    EXPECT_DOUBLE_EQ(four.tau(1), 0.25);
    EXPECT_DOUBLE_EQ(four.tau(2), 0.5);
    EXPECT_DOUBLE_EQ(four.tau(3), 0.75);

    const FractionProposer skew{{std::log(1.0), std::log(3.0)}, 0.0};
    EXPECT_NEAR(skew.probabilities()[0], 0.25, 1e-12);
    EXPECT_NEAR(skew.probabilities()[1], 0.75, 1e-12);
    EXPECT_NEAR(fractions_from_logits(skew).tau(1), 0.25, 1e-12);

    for (double c : {-7.5, 0.0, 3.0, 42.0}) {
        const auto fs = fractions_from_logits(FractionProposer{std::vector<double>(32, c), 0.0});
        for (std::size_t i = 0; i <= 32; ++i) EXPECT_NEAR(fs.tau(i), i / 32.0, 1e-12);
    }
}

TEST(FractionsFromLogits, RejectsNonFiniteLogits) {
    EXPECT_THROW(fractions_from_logits(FractionProposer{{0.0, std::nan("")}, 0.0}), InvalidArgument);
    EXPECT_THROW(fractions_from_logits(FractionProposer{{0.0, INFINITY}, 0.0}), InvalidArgument);
}

TEST(FractionsFromLogits, AlwaysStrictlyOrdered) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> size(1, 64);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.0, 60.0);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> logits(static_cast<std::size_t>(size(rng)));
        const double s = scale(rng);
        for (auto& l : logits) l = s * n(rng);
        FractionSet fs = FractionSet::equally_spaced(1);
        ASSERT_NO_THROW(fs = fractions_from_logits(FractionProposer{logits, 0.0})) << "trial " << trial;
        for (std::size_t i = 1; i <= fs.segments(); ++i) ASSERT_LT(fs.tau(i - 1), fs.tau(i));
    }
}

TEST(FractionsFromLogits, ShiftInvariant) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> logits(2 + trial % 40);
        for (auto& l : logits) l = n(rng);
        auto shifted = logits;
        const double c = 10.0 * n(rng);
        for (auto& l : shifted) l += c;
        const auto a = FractionProposer{logits, 0.0}.fractions();
        const auto b = FractionProposer{shifted, 0.0}.fractions();
        for (std::size_t i = 0; i <= a.segments(); ++i) EXPECT_NEAR(a.tau(i), b.tau(i), 1e-12);
    }
}

TEST(Entropy, Examples) {
    EXPECT_NEAR(entropy(FractionProposer::uniform(32)), std::log(32.0), 1e-9);
    EXPECT_NEAR(std::log(32.0), 3.46574, 1e-5);
    EXPECT_NEAR(entropy(FractionProposer{{0.0, -50.0}, 0.0}), 0.0, 1e-8);
    EXPECT_NEAR(entropy(FractionProposer{{0.0, 0.0}, 0.0}), 0.693147, 1e-6);
}

TEST(LogitGradient, Examples) {
    const auto p = FractionProposer::uniform(4);
    for (double g : logit_gradient(p, std::vector<double>{0.0, 0.0, 0.0})) EXPECT_EQ(g, 0.0);

    const auto two = logit_gradient(FractionProposer::uniform(2), std::vector<double>{1.0});
    EXPECT_NEAR(two[0], 0.25, 1e-9);
    EXPECT_NEAR(two[1], -0.25, 1e-9);

    EXPECT_THROW(logit_gradient(p, std::vector<double>{1.0}), InvalidArgument);
}

TEST(LogitGradient, MatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    const double h = 1e-6;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t segments = 2 + trial % 12;
        std::vector<double> logits(segments), g(segments - 1);
        for (auto& l : logits) l = n(rng);
        for (auto& x : g) x = n(rng);
        const double lambda = (trial % 3 == 0) ? 0.0 : 0.1 * std::fabs(n(rng));
        const auto analytic = FractionProposer{logits, lambda}.logit_gradient(g);
        for (std::size_t k = 0; k < segments; ++k) {
            auto up = logits, down = logits;
            up[k] += h;
            down[k] -= h;
            const double fd = (weighted_fraction_sum(up, g, lambda) - weighted_fraction_sum(down, g, lambda)) / (2 * h);
            EXPECT_LT(fqf::testing::relative_error(analytic[k], fd, 1e-4), 1e-5) << analytic[k] << " vs " << fd;
        }
    }
}

TEST(OptimizerStateTest, ValidatesAndKeepsAccumulatorsNonNegative) {
    EXPECT_THROW(OptimizerState(0.0), InvalidArgument);
    EXPECT_THROW(OptimizerState(0.1, 1.0), InvalidArgument);
    OptimizerState s(0.1);
    std::vector<double> x{1.0, -2.0};
    s.apply(x, std::vector<double>{0.5, -3.0});
    s.apply(x, std::vector<double>{-0.1, 0.0});
    for (double m : s.mean_square) EXPECT_GE(m, 0.0);
    for (double m : s.max_mean_square) EXPECT_GE(m, 0.0);
    EXPECT_EQ(s.iteration, 2u);
    EXPECT_THROW(s.apply(x, std::vector<double>{1.0}), InvalidArgument);
}

TEST(OptimizeFractions, UniformConvergesToEqualSpacingFromAnyStart) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 1.5);
    const auto qf = QuantileFunction::uniform(0, 1);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> start(4);
        for (auto& l : start) l = n(rng);
        OptimizerState state(0.05);
        const auto r = optimize_fractions(qf, FractionProposer{start, 0.0}, 5000, state, {100});
        for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(r.fractions.tau(i), i / 4.0, 1e-3) << "trial " << trial;
    }
}

TEST(OptimizeFractions, ExponentialReachesGridSearchOptimum) {
    const auto qf = QuantileFunction::exponential(1);
    const auto oracle = grid_search_oracle(qf, 3, 1e-3);
    OptimizerState state(0.05);
    const auto r = optimize_fractions(qf, 3, 2000, state);
    const double w1 = r.trace.back().w1;
    EXPECT_LE(w1, oracle.w1 * 1.02);
    EXPECT_GE(w1, oracle.w1 - 1e-6);
}

TEST(OptimizeFractions, StationaryStartStaysPut) {
    const auto qf = QuantileFunction::uniform(0, 1);
    OptimizerState state(0.05);
    const auto r = optimize_fractions(qf, 8, 500, state);
    for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k].w1, r.trace[k - 1].w1);
    for (std::size_t i = 1; i < 8; ++i) EXPECT_NEAR(r.fractions.tau(i), i / 8.0, 1e-6);
}

TEST(OptimizeFractions, TraceNonIncreasingOnSmoothSuite) {
    for (const auto& qf : smooth_suite()) {
        for (std::size_t n : {2u, 3u, 4u, 8u}) {
            for (double step : {0.01, 0.05}) {
                OptimizerState state(step);
                const auto r = optimize_fractions(qf, n, 1000, state);
                for (std::size_t k = 1; k < r.trace.size(); ++k)
                    ASSERT_LE(r.trace[k].w1, r.trace[k - 1].w1 + 1e-6)
                        << qf.describe() << " N=" << n << " step=" << step << " at " << r.trace[k].step;
            }
        }
    }
}

TEST(OptimizeFractions, DivergenceRaisesNumericalError) {
    OptimizerState state(30.0);
    EXPECT_THROW(optimize_fractions(QuantileFunction::exponential(1), 4, 50, state), NumericalError);
    OptimizerState ok(0.05);
    EXPECT_THROW(optimize_fractions(QuantileFunction::exponential(1), 1, 10, ok), InvalidArgument);
    EXPECT_THROW(optimize_fractions(QuantileFunction::exponential(1), 3, 0, ok), InvalidArgument);
}

TEST(OptimizeFractions, EntropyKeepsFlatTargetsFromCollapsing) {
    // On a two-point target the fraction gradient vanishes inside each flat
    // piece, so collapsed segments stay collapsed unless the entropy term acts.
    const auto qf = QuantileFunction::two_point(0.0, 0.3, 2.0);
    std::vector<double> start(8, 0.0);
    start[0] = start[1] = 5.0;
    OptimizerState plain(0.05), regular(0.05);
    const auto a = optimize_fractions(qf, FractionProposer{start, 0.0}, 2000, plain);
    const auto b = optimize_fractions(qf, FractionProposer{start, 0.01}, 2000, regular);
    EXPECT_GT(b.fractions.min_width(), a.fractions.min_width());
    EXPECT_GT(b.proposer.entropy(), a.proposer.entropy());
}

TEST(GridSearchOracle, Examples) {
    const auto u = QuantileFunction::uniform(0, 1);
    const auto two = grid_search_oracle(u, 2, 1e-3);
    EXPECT_NEAR(two.fractions.tau(1), 0.5, 1e-12);
    EXPECT_NEAR(two.w1, 0.125, 1e-9);

    const auto three = grid_search_oracle(u, 3, 1e-2);
    EXPECT_NEAR(three.fractions.tau(1), 1.0 / 3.0, 1e-2);
    EXPECT_NEAR(three.fractions.tau(2), 2.0 / 3.0, 1e-2);
    EXPECT_NEAR(three.w1, 1.0 / 12.0, 1e-4);

    const auto g = grid_search_oracle(QuantileFunction::gaussian(0, 1), 2, 1e-3);
    EXPECT_NEAR(g.fractions.tau(1), 0.5, 1e-12);

    EXPECT_THROW(grid_search_oracle(u, 4, 1e-2), InvalidArgument);
    EXPECT_THROW(grid_search_oracle(u, 2, 0.5), InvalidArgument);
}
