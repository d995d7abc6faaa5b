#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fqf/rl/agent.hpp"
#include "fqf/wasserstein.hpp"

using namespace fqf;
using namespace fqf::rl;

namespace {

AgentConfig small_config(AgentKind kind, std::size_t n, double gamma) {
    AgentConfig c;
    c.kind = kind;
    c.N = n;
    c.gamma = gamma;
    c.hidden = 32;
    c.n_basis = 32;
    return c;
}

Policy always(std::size_t action) {
    return [action](std::size_t, Rng&) { return action; };
}

std::vector<UpdateDiagnostics> run(const ToyMDP& mdp, const AgentConfig& cfg, std::size_t updates, std::uint64_t seed,
                                   std::vector<double>* q_out = nullptr) {
    Agent agent(mdp, cfg, seed);
    std::vector<UpdateDiagnostics> log;
    train(mdp, agent, {updates, 1}, seed, [&](const UpdateDiagnostics& d) { log.push_back(d); });
    if (q_out) *q_out = agent.q_values(mdp.features(mdp.start_state()));
    return log;
}

} // namespace

TEST(ToyMdp, ValidatesDynamics) {
    using Row = ToyMDP::Row;
    const std::vector<ToyMDP::StateSpec> one{{{1.0}, false}};
    EXPECT_THROW(ToyMDP("bad", one, 1, {Row{{{0.0, 0.6}}, {{1.0, 1.0}}}}, 0.9), InvalidArgument);
    EXPECT_THROW(ToyMDP("bad", one, 1, {Row{{{0.0, 1.0}}, {{1.0, 0.5}}}}, 0.9), InvalidArgument);
    EXPECT_THROW(ToyMDP("bad", one, 1, {Row{{{3.0, 1.0}}, {{1.0, 1.0}}}}, 0.9), InvalidArgument);
    EXPECT_THROW(ToyMDP("bad", one, 1, {Row{{{0.0, 1.0}}, {{1.0, 1.0}}}}, 1.0), InvalidArgument);
    EXPECT_THROW(ToyMDP("bad", one, 1, {Row{{{0.0, 1.0}}, {{NAN, 1.0}}}}, 0.9), InvalidArgument);
    EXPECT_NO_THROW(ToyMDP("ok", one, 1, {Row{{{0.0, 0.5 + 4e-13}, {0.0, 0.5}}, {{1.0, 1.0}}}}, 0.9));
    EXPECT_THROW(builtin_environment("atari"), InvalidArgument);
    for (const auto& name : builtin_environment_names()) EXPECT_EQ(builtin_environment(name).name(), name);
}

TEST(ToyMdp, TransitionRowsSumToOne) {
    for (const auto& name : builtin_environment_names()) {
        const auto mdp = builtin_environment(name);
        for (std::size_t s = 0; s < mdp.num_states(); ++s) {
            if (mdp.is_terminal(s)) continue;
            for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
                double total = 0.0;
                for (const auto& o : mdp.row(s, a).next) total += o.prob;
                EXPECT_NEAR(total, 1.0, 1e-12) << name;
            }
        }
    }
}

TEST(ToyMdp, LoadsDeclarativeSchema) {
    const auto j = nlohmann::json::parse(R"({
        "schema_version": 1, "name": "two_step", "gamma": 0.5, "actions": 1,
        "states": [{}, {}, {"terminal": true}],
        "transitions": [
            {"state": 0, "action": 0, "next": [[1, 1.0]], "reward": 1.0},
            {"state": 1, "action": 0, "next": [[2, 1.0]], "reward": [[0.0, 0.25], [4.0, 0.75]]}
        ]})");
    const auto mdp = mdp_from_json(j);
    EXPECT_EQ(mdp.name(), "two_step");
    EXPECT_EQ(mdp.num_states(), 3u);
    EXPECT_EQ(mdp.feature_dim(), 3u);
    EXPECT_EQ(mdp.horizon(), kDefaultHorizon);
    EXPECT_EQ(mdp.row(1, 0).reward.size(), 2u);

    auto missing = j;
    missing["transitions"].erase(1);
    EXPECT_THROW(mdp_from_json(missing), InvalidArgument);
    auto version = j;
    version["schema_version"] = 2;
    EXPECT_THROW(mdp_from_json(version), InvalidArgument);
    auto bad_probs = j;
    bad_probs["transitions"][1]["reward"][0][1] = 0.5;
    EXPECT_THROW(mdp_from_json(bad_probs), InvalidArgument);
}

TEST(TrueReturnDistribution, DeterministicChainIsPointMass) {
    Rng rng(1);
    const auto qf = true_return_distribution(terminal_chain_mdp(), always(0), 0, 0, 100, rng);
    for (double p : {0.0, 0.3, 1.0}) EXPECT_NEAR(qf(p), 1.75, 1e-12);
}

TEST(TrueReturnDistribution, BanditIsTwoPoint) {
    Rng rng(2);
    std::vector<double> draws;
    const auto mdp = coin_bandit_mdp();
    for (int k = 0; k < 20000; ++k) draws.push_back(rollout_return(mdp, always(0), 0, 0, rng, mdp.gamma()));
    std::size_t twos = 0;
    for (double d : draws) {
        EXPECT_TRUE(d == 0.0 || d == 2.0);
        twos += d == 2.0;
    }
    const double sd = std::sqrt(0.25 / 20000.0);
    EXPECT_NEAR(twos / 20000.0, 0.5, 3 * sd);
    Rng again(2);
    const auto qf = true_return_distribution(mdp, always(0), 0, 0, 20000, again);
    EXPECT_EQ(qf(0.25), 0.0);
    EXPECT_EQ(qf(0.75), 2.0);
}

TEST(TrueReturnDistribution, CoinChainMatchesEnumeration) {
    const auto mdp = coin_chain_mdp(0.5);
    // Enumerate the reward sequences of the two steps.
    std::map<double, double> exact;
    for (const auto& r0 : mdp.row(0, 0).reward)
        for (const auto& r1 : mdp.row(1, 0).reward) exact[r0.value + 0.5 * r1.value] += r0.prob * r1.prob;
    ASSERT_EQ(exact.size(), 4u);
    std::vector<double> values, probs;
    for (auto [v, p] : exact) {
        values.push_back(v);
        probs.push_back(p);
    }
    const auto oracle = QuantileFunction::discrete(values, probs);

    Rng rng(3);
    const auto mc = true_return_distribution(mdp, always(0), 0, 0, 40000, rng);
    for (double p : {0.1, 0.2, 0.4, 0.6, 0.8, 0.9}) EXPECT_EQ(mc(p), oracle(p)) << p;
    const double w1 = w1_error(oracle, StaircaseApproximation(FractionSet::equally_spaced(4), {0.0, 1.0, 1.5, 2.5}));
    EXPECT_NEAR(w1, 0.0, 1e-9);
}

TEST(BellmanTarget, Examples) {
    const auto t = bellman_target(5.0, 0.9, true, std::vector<double>{1.0, -3.0, 8.0});
    for (double v : t) EXPECT_EQ(v, 5.0);
    const auto u = bellman_target(1.0, 0.5, false, std::vector<double>{2.0, 4.0});
    EXPECT_EQ(u, (std::vector<double>{2.0, 3.0}));
}

TEST(BellmanTarget, ContractsToFixedPoint) {
    std::vector<double> z(8, 0.0);
    double prev_gap = INFINITY;
    for (int it = 0; it < 50; ++it) {
        const auto next = bellman_target(1.0, 0.5, false, z);
        double gap = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) gap = std::max(gap, std::fabs(next[i] - z[i]));
        if (it > 0) {
            EXPECT_LE(gap, 0.5 * prev_gap + 1e-15);
        }
        prev_gap = gap;
        z = next;
    }
    for (double v : z) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(EpsilonGreedy, Examples) {
    Rng rng(4);
    EXPECT_EQ(epsilon_greedy(std::vector<double>{1.0, 3.0, 2.0}, 0.0, rng), 1u);
    EXPECT_EQ(epsilon_greedy(std::vector<double>{2.0, 2.0}, 0.0, rng), 0u);
    EXPECT_THROW(epsilon_greedy(std::vector<double>{}, 0.0, rng), InvalidArgument);
}

TEST(EpsilonGreedy, FullyRandomIsUniform) {
    Rng rng(5);
    const int draws = 10000, actions = 4;
    std::vector<int> counts(actions, 0);
    for (int k = 0; k < draws; ++k) ++counts[epsilon_greedy(std::vector<double>{0.0, 9.0, 1.0, 2.0}, 1.0, rng)];
    const double p = 1.0 / actions, sd = std::sqrt(draws * p * (1 - p));
    for (int c : counts) EXPECT_NEAR(c, draws * p, 3 * sd);

    Rng a(9), b(9);
    for (int k = 0; k < 100; ++k)
        EXPECT_EQ(epsilon_greedy(std::vector<double>{0.0, 1.0}, 0.5, a), epsilon_greedy(std::vector<double>{0.0, 1.0}, 0.5, b));
}

TEST(EvaluatePolicy, Examples) {
    Rng rng(6);
    const auto zero = zero_reward_mdp();
    const auto random = [](std::size_t, Rng& r) { return std::uniform_int_distribution<std::size_t>(0, 1)(r); };
    const auto z = evaluate_policy(zero, random, 200, rng);
    EXPECT_EQ(z.mean, 0.0);
    EXPECT_EQ(z.stderr_, 0.0);

    const auto c = evaluate_policy(chain_mdp(), always(1), 50, rng);
    EXPECT_EQ(c.mean, 1.0);
    EXPECT_EQ(c.stderr_, 0.0);

    Rng r1(7), r2(7);
    const auto grid = windy_gridworld_mdp();
    const auto e1 = evaluate_policy(grid, always(3), 30, r1);
    const auto e2 = evaluate_policy(grid, always(3), 30, r2);
    EXPECT_EQ(e1.mean, e2.mean);
    EXPECT_LT(e1.mean, 0.0);
}

TEST(ReplayBufferTest, RingOverwriteAndDeterministicSampling) {
    ReplayBuffer buf(3, 11);
    EXPECT_THROW(buf.sample(1), InvalidArgument);
    for (std::size_t k = 0; k < 5; ++k) buf.add({k, 0, static_cast<double>(k), 0, false});
    EXPECT_EQ(buf.size(), 3u);
    std::vector<double> stored;
    for (std::size_t i = 0; i < 3; ++i) stored.push_back(buf[i].r);
    std::sort(stored.begin(), stored.end());
    EXPECT_EQ(stored, (std::vector<double>{2.0, 3.0, 4.0}));
    for (const auto& t : buf.sample(100)) EXPECT_GE(t.r, 2.0);

    ReplayBuffer a(10, 5), b(10, 5);
    for (std::size_t k = 0; k < 10; ++k) {
        a.add({k, 0, 0.0, 0, false});
        b.add({k, 0, 0.0, 0, false});
    }
    const auto sa = a.sample(20), sb = b.sample(20);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sa[i].x, sb[i].x);
    EXPECT_THROW(a.add({0, 0, INFINITY, 0, false}), InvalidArgument);
}

TEST(AgentTest, ZeroRewardFixedPointLeavesParametersUnchanged) {
    const auto mdp = zero_reward_mdp();
    auto cfg = small_config(AgentKind::FQF, 4, mdp.gamma());
    cfg.fraction_lr = 1e-3;
    Agent agent(mdp, cfg, 1);
    const auto before = agent.online().parameters();
    const std::vector<double> w1_before(agent.proposer_params().begin(), agent.proposer_params().end());
    std::vector<Transition> batch{{0, 0, 0.0, 0, false}, {0, 1, 0.0, 1, true}};
    const auto d = agent.update(mdp, batch);
    EXPECT_EQ(d.loss, 0.0);
    EXPECT_EQ(d.mean_abs_fraction_grad, 0.0);
    for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(agent.online().parameters()[k].data, before[k].data);
    EXPECT_EQ(std::vector<double>(agent.proposer_params().begin(), agent.proposer_params().end()), w1_before);
    EXPECT_THROW(agent.update(mdp, std::vector<Transition>{}), InvalidArgument);
}

TEST(AgentTest, ConfigValidation) {
    AgentConfig c;
    c.N = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = AgentConfig{};
    c.epsilon_train = 1.5;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = AgentConfig{};
    c.kappa = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    EXPECT_THROW(agent_kind_from_string("dqn"), InvalidArgument);
    EXPECT_EQ(agent_kind_from_string(to_string(AgentKind::SampledFraction)), AgentKind::SampledFraction);
}

TEST(AgentTest, NonFiniteLossRaises) {
    const auto mdp = bandit_mdp("huge", {{{1e308, 1.0}}});
    Agent agent(mdp, small_config(AgentKind::FixedFraction, 4, mdp.gamma()), 0);
    std::vector<Transition> batch{{0, 0, 1e308, 1, true}};
    EXPECT_THROW(agent.update(mdp, batch), NumericalError);
}

TEST(AgentTest, ProposerGradientDoesNotReachValueNet) {
    const auto mdp = two_armed_bandit_mdp();
    auto fqf = small_config(AgentKind::FQF, 4, mdp.gamma());
    fqf.fraction_lr = 1e-2;
    auto fixed = fqf;
    fixed.kind = AgentKind::FixedFraction;
    Agent a(mdp, fqf, 3), b(mdp, fixed, 3);
    // A few updates with a trained-enough net so the fraction gradient is non-zero.
    std::vector<Transition> batch{{0, 1, 2.0, 1, true}, {0, 1, 0.0, 1, true}, {0, 0, 1.0, 1, true}};
    a.update(mdp, batch);
    b.update(mdp, batch);
    for (std::size_t k = 0; k < a.online().parameters().size(); ++k)
        EXPECT_EQ(a.online().parameters()[k].data, b.online().parameters()[k].data);
    for (int i = 0; i < 20; ++i) a.update(mdp, batch);
    double moved = 0.0;
    for (double v : a.proposer_params()) moved += std::fabs(v);
    EXPECT_GT(moved, 0.0);
    const auto fs = a.fractions(mdp.features(0), 1);
    for (std::size_t i = 1; i <= fs.segments(); ++i) EXPECT_LT(fs.tau(i - 1), fs.tau(i));
}

TEST(AgentTest, FrozenProposerMatchesFixedFractions) {
    const auto mdp = two_armed_bandit_mdp();
    auto fqf = small_config(AgentKind::FQF, 4, mdp.gamma());
    fqf.fraction_lr = 0.0;
    auto fixed = fqf;
    fixed.kind = AgentKind::FixedFraction;
    std::vector<double> qa, qb;
    const auto la = run(mdp, fqf, 300, 8, &qa);
    const auto lb = run(mdp, fixed, 300, 8, &qb);
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t k = 0; k < la.size(); ++k) ASSERT_EQ(la[k].loss, lb[k].loss) << "update " << k;
    EXPECT_EQ(qa, qb);
}

TEST(AgentTest, SameSeedGivesIdenticalDiagnostics) {
    const auto mdp = windy_gridworld_mdp();
    for (auto kind : {AgentKind::FQF, AgentKind::SampledFraction}) {
        auto cfg = small_config(kind, 4, mdp.gamma());
        cfg.fraction_lr = 1e-3;
        const auto a = run(mdp, cfg, 150, 21);
        const auto b = run(mdp, cfg, 150, 21);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            EXPECT_EQ(a[k].loss, b[k].loss);
            EXPECT_EQ(a[k].mean_abs_fraction_grad, b[k].mean_abs_fraction_grad);
            EXPECT_EQ(a[k].monotonicity_violation_rate, b[k].monotonicity_violation_rate);
        }
    }
}

TEST(AgentTraining, SingleStateFixedPoint) {
    const auto mdp = single_state_mdp(1.0, 0.5);
    for (auto kind : {AgentKind::FQF, AgentKind::FixedFraction, AgentKind::SampledFraction}) {
        std::vector<double> q;
        Agent agent(mdp, small_config(kind, 8, 0.5), 0);
        train(mdp, agent, {3000, 0}, 0);
        q = agent.q_values(mdp.features(0));
        EXPECT_NEAR(q[0], 2.0, 0.02) << to_string(kind);
        if (kind != AgentKind::SampledFraction) {
            for (double v : agent.quantile_estimate(mdp.features(0), 0).values) EXPECT_NEAR(v, 2.0, 0.05);
        }
    }
}

TEST(AgentTraining, MedianAgentLossDecreases) {
    const auto mdp = coin_bandit_mdp();
    const auto log = run(mdp, small_config(AgentKind::FixedFraction, 1, mdp.gamma()), 600, 4);
    auto mean = [](auto first, auto last) {
        double s = 0.0;
        for (auto it = first; it != last; ++it) s += it->loss;
        return s / static_cast<double>(std::distance(first, last));
    };
    EXPECT_LT(mean(log.end() - 100, log.end()), mean(log.begin(), log.begin() + 100));
}

TEST(AgentTraining, GreedyAgentPicksRiskyArmWhenItPaysMore) {
    const auto wide = two_armed_bandit_mdp(4.0);
    Agent agent(wide, small_config(AgentKind::FQF, 8, wide.gamma()), 5);
    train(wide, agent, {1500, 0}, 5);
    Rng rng(1);
    EXPECT_EQ(agent.act(wide.features(0), 0.0, rng), 1u);
    const auto stats = evaluate_policy(wide, agent, 400, 0.0, rng);
    EXPECT_NEAR(stats.mean, 2.0, 4 * std::max(stats.stderr_, 1e-3));

    const auto even = two_armed_bandit_mdp(2.0);
    Agent other(even, small_config(AgentKind::FQF, 8, even.gamma()), 5);
    train(even, other, {1500, 0}, 5);
    const auto q = other.q_values(even.features(0));
    EXPECT_NEAR(q[0], 1.0, 0.05);
    EXPECT_NEAR(q[1], 1.0, 0.1);
}
