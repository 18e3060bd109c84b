#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "oracles.hpp"
#include "vemlab/error.hpp"
#include "vemlab/memory.hpp"
#include "vemlab/random.hpp"
#include "vemlab/training.hpp"

namespace vemlab {
namespace {

TrainConfig evl_cfg(double tau, double alpha) {
  TrainConfig cfg;
  cfg.tau = tau;
  cfg.expectile_step = alpha;
  cfg.learning_rate = 1.0;
  return cfg;
}

CriticPair constant_pair(std::size_t n, double online, double target) {
  CriticPair p;
  p.online = {ValueTable(n, online), ValueTable(n, online)};
  p.target = {ValueTable(n, target), ValueTable(n, target)};
  return p;
}

TEST(EvlStep, ZeroTdErrorLeavesTablesUnchanged) {
  // r + gamma V(s') - V(s) = 0 with V = 0 and r = 0.
  const std::vector<TransitionSample> batch{{0, 0, 0.0, 1}, {1, 0, 0.0, 0}};
  const auto critics = constant_pair(2, 0.0, 0.0);
  EXPECT_EQ(evl_step(critics, batch, 0.9, evl_cfg(0.7, 0.5)), critics);
}

TEST(EvlStep, SinglePositiveSampleArithmetic) {
  const std::vector<TransitionSample> batch{{0, 0, 1.0, 1}};
  const auto out = evl_step(constant_pair(2, 0.0, 0.0), batch, 0.9, evl_cfg(0.9, 0.5));
  EXPECT_NEAR(out.online[0][0], 0.9, 1e-15);
  EXPECT_NEAR(out.online[1][0], 0.9, 1e-15);
  EXPECT_EQ(out.online[0][1], 0.0);
  EXPECT_EQ(out.target, constant_pair(2, 0.0, 0.0).target);
}

TEST(EvlStep, EmptyBatchCountsWarning) {
  WarningCounter warnings;
  const auto critics = constant_pair(3, 1.0, 2.0);
  EXPECT_EQ(evl_step(critics, {}, 0.9, evl_cfg(0.7, 0.5), &warnings), critics);
  EXPECT_EQ(warnings.empty_batches, 1u);
}

TEST(EvlStep, FullBatchIterationReachesOperatorFixedPoint) {
  const auto mdp = generate_random_mdp(3, 10, 3);
  std::vector<TransitionSample> batch;
  for (StateIndex s = 0; s < 10; ++s) {
    for (ActionIndex a = 0; a < 3; ++a) batch.push_back({s, a, mdp.reward_at(s, a), mdp.next(s, a)});
  }
  const double tau = 0.8, alpha = step_size_bound(0.8);
  CriticPair critics = constant_pair(10, 0.0, 0.0);
  for (int k = 0; k < 20'000; ++k) {
    critics = polyak_update(evl_step(critics, batch, mdp.gamma, evl_cfg(tau, alpha)), 1.0);
  }
  const auto fp = fixed_point(make_operator({tau, alpha}, mdp, TabularPolicy::uniform(10, 3)), ValueTable(10), 1e-13,
                              1'000'000);
  ASSERT_TRUE(fp.converged);
  EXPECT_LE(sup_distance(critics.online[0], fp.values), 1e-6);
  EXPECT_LE(sup_distance(critics.online[1], fp.values), 1e-6);
}

TEST(Polyak, Arithmetic) {
  EXPECT_EQ(polyak_update(constant_pair(2, 3.0, 1.0), 1.0).target, constant_pair(2, 3.0, 3.0).target);
  EXPECT_DOUBLE_EQ(polyak_update(constant_pair(2, 1.0, 0.0), 0.005).target[0][1], 0.005);
  const auto same = constant_pair(2, 1.5, 1.5);
  EXPECT_EQ(polyak_update(same, 0.25), same);
  EXPECT_THROW(polyak_update(same, 0.0), ParameterError);
  EXPECT_THROW(polyak_update(same, 1.5), ParameterError);
}

TEST(CriticInit, TargetsCopyOnlineAndNoiseIsBounded) {
  const auto p = CriticPair::initialize(8, 4, 1e-3);
  EXPECT_EQ(p.online, p.target);
  EXPECT_NE(p.online[0], p.online[1]);
  for (const auto& table : p.online) {
    for (double x : table) {
      EXPECT_GE(x, 0.0);
      EXPECT_LT(x, 1e-3);
    }
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.kappa = 0.0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = TrainConfig{};
  cfg.tau = 0.9;
  cfg.expectile_step = 0.9;
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_EQ(parse_critic_loss(to_string(CriticLoss::expectile)), CriticLoss::expectile);
  EXPECT_THROW(parse_critic_loss("huber"), ParameterError);
}

struct ChainFixture {
  TabularMdp mdp = make_sparse_chain(10, 0.95);
  OfflineDataset data;
  ChainFixture() {
    const auto expert = softmax_behavior_policy(mdp, 0.02);
    data = concat_datasets(collect_dataset(mdp, expert, {30, 30, 1}),
                           collect_dataset(mdp, TabularPolicy::uniform(10, 2), {30, 30, 2}));
  }
};

TrainConfig chain_cfg(std::size_t n_max) {
  TrainConfig cfg;
  cfg.total_steps = 300;
  cfg.batch_size = 64;
  cfg.kappa = 1.0;
  cfg.memory_update_period = 10;
  cfg.n_max = n_max;
  cfg.seed = 3;
  return cfg;
}

TEST(TrainVem, ZeroStepsReturnsUniformPolicyAndInitialCritics) {
  ChainFixture fx;
  auto cfg = chain_cfg(1);
  cfg.total_steps = 0;
  const auto res = train_vem(fx.mdp, fx.data, cfg, {});
  EXPECT_EQ(res.policy, TabularPolicy::uniform(10, 2));
  EXPECT_EQ(res.critics, CriticPair::initialize(10, derive_seed(cfg.seed, streams::kCriticInit), cfg.init_noise));
  EXPECT_TRUE(res.metrics.empty());
}

TEST(TrainVem, ExpertChainReachesNearOptimalReturn) {
  ChainFixture fx;
  const double j_star = evaluate_policy(fx.mdp, greedy_policy(fx.mdp, solve_optimal_values(fx.mdp)));
  auto cfg = chain_cfg(fx.data.max_episode_length());
  cfg.total_steps = 1000;
  const auto res = train_vem(fx.mdp, fx.data, cfg, {});
  EXPECT_GE(res.metrics.back().policy_return, 0.95 * j_star);
}

TEST(TrainVem, DeterministicAndStreamsMetrics) {
  ChainFixture fx;
  std::vector<MetricsRecord> streamed;
  const auto a = train_vem(fx.mdp, fx.data, chain_cfg(4), {}, [&](const MetricsRecord& r) { streamed.push_back(r); });
  const auto b = train_vem(fx.mdp, fx.data, chain_cfg(4), {});
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.critics, b.critics);
  EXPECT_EQ(streamed, a.metrics);
  auto other = chain_cfg(4);
  other.seed = 4;
  EXPECT_NE(train_vem(fx.mdp, fx.data, other, {}).metrics, a.metrics);
}

TEST(TrainVem, CriticsStayWithinRewardBound) {
  ChainFixture fx;
  const double cap = 1.0 / (1.0 - fx.mdp.gamma) + 1e-6;
  for (std::size_t n_max : {1u, 4u, 30u}) {
    for (auto loss : {CriticLoss::squared, CriticLoss::expectile}) {
      auto cfg = chain_cfg(n_max);
      cfg.critic_loss = loss;
      const auto res = train_vem(fx.mdp, fx.data, cfg, {WeightingKind::softmax, 0.5});
      EXPECT_LE(res.max_critic_value, cap);
      for (const auto& m : res.metrics) EXPECT_LE(m.max_value, cap);
    }
  }
}

TEST(TrainVem, TwinMinimumIsConservative) {
  ChainFixture fx;
  const auto res = train_vem(fx.mdp, fx.data, chain_cfg(5), {});
  const auto recs = compute_advantages(res.memory, res.critics.online);
  std::size_t i = 0;
  for (const auto& traj : res.memory.trajectories) {
    for (std::size_t t = 0; t < traj.length(); ++t, ++i) {
      const double mean_v = 0.5 * (res.critics.online[0][traj.steps[t].s] + res.critics.online[1][traj.steps[t].s]);
      EXPECT_LE(recs[i].advantage + mean_v, traj.planned_returns[0][t] + 1e-12);
      EXPECT_LE(recs[i].advantage + mean_v, traj.planned_returns[1][t] + 1e-12);
    }
  }
}

TEST(TrainVem, TargetsLagBetweenMemoryUpdates) {
  ChainFixture fx;
  auto cfg = chain_cfg(3);
  cfg.memory_update_period = 1000;
  cfg.total_steps = 20;
  const auto res = train_vem(fx.mdp, fx.data, cfg, {});
  EXPECT_EQ(res.critics.target, CriticPair::initialize(10, derive_seed(cfg.seed, streams::kCriticInit), 1e-3).target);
  EXPECT_NE(res.critics.online, res.critics.target);
}

TEST(TrainVem, RejectsMismatchedDataset) {
  ChainFixture fx;
  auto data = fx.data;
  data.n_states = 11;
  EXPECT_THROW(train_vem(fx.mdp, data, chain_cfg(1), {}), ParameterError);
}

TEST(StepsToFraction, FirstCrossing) {
  std::vector<MetricsRecord> m(4);
  const double j[] = {0.1, 0.96, 0.5, 1.0};
  for (std::size_t i = 0; i < 4; ++i) {
    m[i].step = (i + 1) * 10;
    m[i].policy_return = j[i];
  }
  EXPECT_EQ(steps_to_fraction_of_final(m, 0.95), 20u);
  EXPECT_EQ(steps_to_fraction_of_final({}, 0.95), 0u);
}

}  // namespace
}  // namespace vemlab
