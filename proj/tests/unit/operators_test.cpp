#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "oracles.hpp"
#include "vemlab/error.hpp"
#include "vemlab/mdp.hpp"
#include "vemlab/operators.hpp"

namespace vemlab {
namespace {

OperatorConfig gradient_cfg(double tau, double alpha) {
  OperatorConfig cfg;
  cfg.tau = tau;
  cfg.alpha = alpha;
  cfg.kind = OperatorKind::expectile_gradient;
  return cfg;
}

// Single state looping on itself with one action.
TabularMdp one_state(double r, double gamma) { return oracle::make_mdp(1, 1, {0}, {r}, gamma); }

// One state whose two actions lead to distinct absorbing states, so the
// backups at state 0 are exactly the two given rewards when V = 0.
TabularMdp two_backups(double r0, double r1) {
  return oracle::make_mdp(3, 2, {1, 2, 1, 1, 2, 2}, {r0, r1, 0, 0, 0, 0}, 0.9, {false, true, true});
}

TEST(StepSizeBound, Values) {
  EXPECT_DOUBLE_EQ(step_size_bound(0.5), 1.0);
  EXPECT_DOUBLE_EQ(step_size_bound(0.9), 1.0 / 1.8);
  EXPECT_DOUBLE_EQ(step_size_bound(0.1), 1.0 / 1.8);
  EXPECT_THROW(step_size_bound(1.0), ParameterError);
}

TEST(ContractionModulus, HalfTauHalfAlpha) { EXPECT_NEAR(contraction_modulus(0.5, 0.5, 0.9), 0.95, 1e-15); }

TEST(OperatorConfig, RejectsStepSizeViolation) {
  auto cfg = gradient_cfg(0.9, 0.6);
  try {
    cfg.validate();
    FAIL() << "expected ParameterError";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("2ατ ≤ 1"), std::string::npos);
  }
  EXPECT_THROW(gradient_cfg(0.0, 0.1).validate(), ParameterError);
  EXPECT_THROW(gradient_cfg(1.0, 0.1).validate(), ParameterError);
  EXPECT_THROW(gradient_cfg(0.5, 0.0).validate(), ParameterError);
  EXPECT_NO_THROW(gradient_cfg(0.9, step_size_bound(0.9)).validate());
  OperatorConfig exact;
  exact.kind = OperatorKind::expectile_exact;
  exact.tau = 0.9;
  exact.alpha = 5.0;
  EXPECT_NO_THROW(exact.validate());
}

TEST(OperatorKind, NamesRoundTrip) {
  for (auto kind : {OperatorKind::expectation, OperatorKind::optimality, OperatorKind::expectile_exact,
                    OperatorKind::expectile_gradient, OperatorKind::quantile_gradient}) {
    EXPECT_EQ(parse_operator_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_operator_kind("bellman"), ParameterError);
}

TEST(Expectation, FixedPointAndZeroValue) {
  const auto mdp = generate_random_mdp(3, 10, 3);
  const auto mu = oracle::random_policy(10, 3, 1);
  const auto v_mu = oracle::linear_policy_values(mdp, mu);
  EXPECT_LE(sup_distance(apply_expectation(v_mu, mdp, mu), v_mu), 1e-10);

  auto ones = mdp;
  std::fill(ones.reward.begin(), ones.reward.end(), 1.0);
  const auto out = apply_expectation(ValueTable(10), ones, mu);
  for (double x : out) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(Expectation, MatchesNaiveLoop) {
  std::mt19937_64 rng(5);
  const auto mdp = generate_random_mdp(8, 15, 4);
  const auto mu = oracle::random_policy(15, 4, 8);
  for (int i = 0; i < 20; ++i) {
    const auto v = oracle::random_values(15, 5.0, rng);
    EXPECT_LE(sup_distance(apply_expectation(v, mdp, mu), oracle::naive_expectation(v, mdp, mu)), 1e-12);
  }
}

TEST(Optimality, FixedPointZeroValueAndNaiveLoop) {
  std::mt19937_64 rng(6);
  const auto mdp = generate_random_mdp(9, 15, 4);
  const auto v_star = oracle::brute_force_optimal(mdp, 3000);
  EXPECT_LE(sup_distance(apply_optimality(v_star, mdp), v_star), 1e-10);

  auto ones = mdp;
  std::fill(ones.reward.begin(), ones.reward.end(), 1.0);
  for (double x : apply_optimality(ValueTable(15), ones)) EXPECT_DOUBLE_EQ(x, 1.0);

  for (int i = 0; i < 20; ++i) {
    const auto v = oracle::random_values(15, 5.0, rng);
    EXPECT_LE(sup_distance(apply_optimality(v, mdp), oracle::naive_optimality(v, mdp)), 1e-12);
  }
}

TEST(Operators, RejectDimensionMismatch) {
  const auto mdp = generate_random_mdp(0, 4, 2);
  const auto mu = TabularPolicy::uniform(4, 2);
  EXPECT_THROW(apply_expectation(ValueTable(3), mdp, mu), ParameterError);
  EXPECT_THROW(apply_optimality(ValueTable(5), mdp), ParameterError);
  EXPECT_THROW(apply_expectile_gradient(ValueTable(4), mdp, TabularPolicy::uniform(3, 2), gradient_cfg(0.5, 0.5)),
               ParameterError);
}

TEST(WeightedExpectile, MeanAtHalf) {
  const std::vector<double> z{0.0, 1.0}, w{0.5, 0.5};
  EXPECT_NEAR(weighted_expectile(z, w, 0.5), 0.5, 1e-11);
}

TEST(WeightedExpectile, TwoPointAtNinety) {
  const std::vector<double> z{0.0, 1.0}, w{0.5, 0.5};
  EXPECT_NEAR(weighted_expectile(z, w, 0.9), 0.9, 1e-11);
  EXPECT_NEAR(oracle::exact_expectile(z, w, 0.9), 0.9, 1e-15);
}

TEST(WeightedExpectile, MatchesPiecewiseLinearOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> pw(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(5), w(5);
    for (auto& x : z) x = u(rng);
    for (auto& x : w) x = pw(rng);
    for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
      EXPECT_NEAR(weighted_expectile(z, w, tau), oracle::exact_expectile(z, w, tau), 1e-11);
    }
  }
}

TEST(WeightedExpectile, NearOneStaysBelowMaximum) {
  const std::vector<double> z{0.0, 0.3, 2.0}, w{0.2, 0.5, 0.3};
  const double out = weighted_expectile(z, w, 0.99);
  EXPECT_LE(out, 2.0);
  EXPECT_NEAR(out, oracle::exact_expectile(z, w, 0.99), 1e-11);
  EXPECT_GT(out, 1.5);
}

TEST(WeightedExpectile, IgnoresZeroWeightsAndRejectsEmpty) {
  const std::vector<double> z{0.0, 100.0, 1.0}, w{0.5, 0.0, 0.5};
  EXPECT_NEAR(weighted_expectile(z, w, 0.5), 0.5, 1e-11);
  const std::vector<double> none{0.0, 0.0};
  EXPECT_THROW(weighted_expectile(z, std::vector<double>{0.0, 0.0, 0.0}, 0.5), ParameterError);
  EXPECT_THROW(weighted_expectile(std::vector<double>{}, std::vector<double>{}, 0.5), ParameterError);
  EXPECT_THROW(weighted_expectile(z, w, 1.0), ParameterError);
}

TEST(ExpectileExact, StatewiseMatchesOracle) {
  const auto mdp = two_backups(0.0, 1.0);
  const auto out = apply_expectile_exact(ValueTable(3), mdp, TabularPolicy::uniform(3, 2), 0.9);
  EXPECT_NEAR(out[0], 0.9, 1e-11);
  EXPECT_NEAR(out[1], 0.0, 1e-11);
}

TEST(ExpectileGradient, HalfTauIsExpectedTdStep) {
  std::mt19937_64 rng(3);
  const auto mdp = generate_random_mdp(4, 10, 3);
  const auto mu = oracle::random_policy(10, 3, 4);
  const double alpha = 0.7;
  for (int i = 0; i < 10; ++i) {
    const auto v = oracle::random_values(10, 5.0, rng);
    const auto out = apply_expectile_gradient(v, mdp, mu, gradient_cfg(0.5, alpha));
    const auto td = oracle::naive_expectation(v, mdp, mu);
    for (StateIndex s = 0; s < 10; ++s) EXPECT_NEAR(out[s], v[s] + alpha * (td[s] - v[s]), 1e-12);
  }
}

TEST(ExpectileGradient, OneTermArithmetic) {
  const auto out =
      apply_expectile_gradient(ValueTable(1), one_state(1.0, 0.0), TabularPolicy::uniform(1, 1), gradient_cfg(0.9, 0.5));
  EXPECT_NEAR(out[0], 0.9, 1e-15);
}

TEST(ExpectileGradient, MatchesNaiveLoop) {
  std::mt19937_64 rng(17);
  const auto mdp = generate_random_mdp(12, 20, 4);
  const auto mu = oracle::random_policy(20, 4, 12);
  for (double tau : {0.1, 0.5, 0.8, 0.95}) {
    const double alpha = step_size_bound(tau);
    const auto v = oracle::random_values(20, 5.0, rng);
    EXPECT_LE(sup_distance(apply_expectile_gradient(v, mdp, mu, gradient_cfg(tau, alpha)),
                           oracle::naive_expectile_gradient(v, mdp, mu, tau, alpha)),
              1e-12);
  }
}

TEST(ExpectileGradient, FixedPointFromReferenceIteration) {
  const auto mdp = generate_random_mdp(21, 12, 3);
  const auto mu = oracle::random_policy(12, 3, 21);
  const double tau = 0.8, alpha = step_size_bound(0.8);
  ValueTable v(12);
  for (int k = 0; k < 200'000; ++k) {
    const auto next = oracle::naive_expectile_gradient(v, mdp, mu, tau, alpha);
    const double step = sup_distance(next, v);
    v = next;
    if (step <= 1e-12) break;
  }
  EXPECT_LE(sup_distance(apply_expectile_gradient(v, mdp, mu, gradient_cfg(tau, alpha)), v), 1e-9);
}

TEST(ExpectileGradient, NoiseNeedsSourceAndIsSeeded) {
  const auto mdp = generate_random_mdp(1, 5, 2);
  const auto mu = TabularPolicy::uniform(5, 2);
  auto cfg = gradient_cfg(0.7, 0.5);
  cfg.noise_sigma = 0.3;
  EXPECT_THROW(apply_expectile_gradient(ValueTable(5), mdp, mu, cfg), ParameterError);
  GaussianNoise a(9, 0.3), b(9, 0.3);
  EXPECT_EQ(apply_expectile_gradient(ValueTable(5), mdp, mu, cfg, &a),
            apply_expectile_gradient(ValueTable(5), mdp, mu, cfg, &b));
  const auto op = make_operator(cfg, mdp, mu, 9);
  EXPECT_NE(op(ValueTable(5)), op(ValueTable(5)));
}

TEST(QuantileGradient, ZeroDeltaIsIdentity) {
  // V already equals every backup: r = 0 everywhere and V = 0.
  const auto mdp = oracle::make_mdp(2, 2, {0, 1, 1, 0}, {0, 0, 0, 0}, 0.9);
  OperatorConfig cfg = gradient_cfg(0.9, 0.5);
  cfg.kind = OperatorKind::quantile_gradient;
  EXPECT_EQ(apply_quantile_gradient(ValueTable(2), mdp, TabularPolicy::uniform(2, 2), cfg), ValueTable(2));
}

TEST(QuantileGradient, UnitStepArithmetic) {
  OperatorConfig cfg = gradient_cfg(0.9, 0.5);
  cfg.kind = OperatorKind::quantile_gradient;
  const ValueTable v(std::vector<double>{2.0});
  // r = 1, gamma = 0: delta = 1 - 2 < 0, then r = 3: delta = +1.
  EXPECT_NEAR(apply_quantile_gradient(v, one_state(3.0, 0.0), TabularPolicy::uniform(1, 1), cfg)[0], 2.9, 1e-15);
  EXPECT_NEAR(apply_quantile_gradient(v, one_state(1.0, 0.0), TabularPolicy::uniform(1, 1), cfg)[0], 1.9, 1e-15);
}

TEST(QuantileGradient, OscillatesMoreThanExpectileNearConvergence) {
  auto mdp = generate_random_mdp(31, 10, 3);
  mdp.reward[4] = 100.0;
  const auto mu = TabularPolicy::uniform(10, 3);
  const double tau = 0.7;
  OperatorConfig e_cfg = gradient_cfg(tau, step_size_bound(tau));
  OperatorConfig q_cfg = e_cfg;
  q_cfg.kind = OperatorKind::quantile_gradient;
  const auto e_op = make_operator(e_cfg, mdp, mu);
  const auto q_op = make_operator(q_cfg, mdp, mu);
  ValueTable ve(10), vq(10);
  double e_tail = 0.0, q_tail = 0.0;
  for (int k = 0; k < 20'000; ++k) {
    auto ne = e_op(ve), nq = q_op(vq);
    if (k >= 19'900) {
      e_tail = std::max(e_tail, sup_distance(ne, ve));
      q_tail = std::max(q_tail, sup_distance(nq, vq));
    }
    ve = std::move(ne);
    vq = std::move(nq);
  }
  EXPECT_LT(e_tail, q_tail);
}

TEST(HalfOperators, NonExpansive) {
  std::mt19937_64 rng(23);
  const auto mdp = generate_random_mdp(2, 15, 4);
  const auto mu = oracle::random_policy(15, 4, 2);
  for (int i = 0; i < 300; ++i) {
    const auto v1 = oracle::random_values(15, 10.0, rng);
    const auto v2 = oracle::random_values(15, 10.0, rng);
    const double d = sup_distance(v1, v2);
    EXPECT_LE(sup_distance(apply_positive_part(v1, mdp, mu), apply_positive_part(v2, mdp, mu)), d + 1e-12);
    EXPECT_LE(sup_distance(apply_negative_part(v1, mdp, mu), apply_negative_part(v2, mdp, mu)), d + 1e-12);
  }
}

TEST(ExpectileGradient, DecomposesIntoHalfOperators) {
  std::mt19937_64 rng(29);
  const auto mdp = generate_random_mdp(6, 12, 3);
  const auto mu = oracle::random_policy(12, 3, 6);
  for (double tau : {0.2, 0.6, 0.9}) {
    const double alpha = 0.9 * step_size_bound(tau);
    const auto v = oracle::random_values(12, 10.0, rng);
    const auto out = apply_expectile_gradient(v, mdp, mu, gradient_cfg(tau, alpha));
    const auto plus = apply_positive_part(v, mdp, mu);
    const auto minus = apply_negative_part(v, mdp, mu);
    for (StateIndex s = 0; s < 12; ++s) {
      const double recomposed =
          (1 - 2 * alpha) * v[s] + 2 * alpha * tau * plus[s] + 2 * alpha * (1 - tau) * minus[s];
      EXPECT_NEAR(out[s], recomposed, 1e-12);
    }
  }
}

TEST(ExpectileGradient, ContractsWithinModulus) {
  std::mt19937_64 rng(37);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mdp = generate_random_mdp(seed, 15, 3);
    const auto mu = oracle::random_policy(15, 3, seed);
    for (double tau : {0.1, 0.5, 0.9}) {
      const double alpha = step_size_bound(tau);
      const double bound = contraction_modulus(tau, alpha, mdp.gamma);
      const auto op = make_operator(gradient_cfg(tau, alpha), mdp, mu);
      for (int i = 0; i < 100; ++i) {
        const auto v1 = oracle::random_values(15, 10.0, rng);
        const auto v2 = oracle::random_values(15, 10.0, rng);
        EXPECT_LE(sup_distance(op(v1), op(v2)), bound * sup_distance(v1, v2) + 1e-9);
      }
    }
  }
}

TEST(ExpectileGradient, MonotoneInTau) {
  std::mt19937_64 rng(41);
  const auto mdp = generate_random_mdp(7, 12, 3);
  const auto mu = oracle::random_policy(12, 3, 7);
  const double alpha = 0.5;  // admissible for every tau
  for (int i = 0; i < 50; ++i) {
    const auto v = oracle::random_values(12, 10.0, rng);
    ValueTable prev = apply_expectile_gradient(v, mdp, mu, gradient_cfg(0.1, alpha));
    for (double tau : {0.3, 0.5, 0.7, 0.9}) {
      const auto cur = apply_expectile_gradient(v, mdp, mu, gradient_cfg(tau, alpha));
      for (StateIndex s = 0; s < 12; ++s) EXPECT_GE(cur[s], prev[s] - 1e-12);
      prev = cur;
    }
  }
}

TEST(ExpectileGradient, FixedPointZeroesTheIncrement) {
  const auto mdp = generate_random_mdp(15, 10, 3);
  const auto mu = oracle::random_policy(10, 3, 15);
  const double tau = 0.7;
  const auto fp = fixed_point(make_operator(gradient_cfg(tau, step_size_bound(tau)), mdp, mu), ValueTable(10),
                              1e-13, 1'000'000);
  ASSERT_TRUE(fp.converged);
  for (StateIndex s = 0; s < 10; ++s) {
    double up = 0.0, down = 0.0;
    for (ActionIndex a = 0; a < 3; ++a) {
      const double d = oracle::backup(mdp, fp.values, s, a) - fp.values[s];
      (d > 0 ? up : down) += mu.prob(s, a) * d;
    }
    EXPECT_NEAR(tau * up, -(1 - tau) * down, 1e-10);
  }
}

TEST(FixedPoint, IdentityConvergesInOneStep) {
  const auto fp = fixed_point([](const ValueTable& v) { return v; }, ValueTable(3, 1.0), 1e-12, 10);
  EXPECT_TRUE(fp.converged);
  EXPECT_EQ(fp.iterations, 1u);
}

TEST(FixedPoint, ZeroBudgetReturnsStart) {
  const ValueTable v0(std::vector<double>{1, 2, 3});
  const auto fp = fixed_point([](const ValueTable& v) { return v; }, v0, 1e-12, 0);
  EXPECT_FALSE(fp.converged);
  EXPECT_EQ(fp.iterations, 0u);
  EXPECT_EQ(fp.values, v0);
}

TEST(FixedPoint, OptimalityOperatorRecoversSolver) {
  const auto mdp = generate_random_mdp(19, 20, 4);
  const double tol = 1e-10;
  OperatorConfig cfg;
  cfg.kind = OperatorKind::optimality;
  const auto fp = fixed_point(make_operator(cfg, mdp, TabularPolicy::uniform(20, 4)), ValueTable(20), tol, 100'000);
  ASSERT_TRUE(fp.converged);
  // Both stop on a step below tol, which bounds each error by gamma/(1-gamma) tol.
  EXPECT_LE(sup_distance(fp.values, solve_optimal_values(mdp, tol)), 2 * tol * mdp.gamma / (1 - mdp.gamma));
  EXPECT_THROW(fixed_point([](const ValueTable& v) { return v; }, ValueTable(1), 0.0, 1), ParameterError);
}

TEST(FixedPoint, ExpectileFixedPointsOrderedInTau) {
  const auto mdp = generate_random_mdp(25, 10, 4);
  const auto mu = softmax_behavior_policy(mdp, 1.0);
  ValueTable prev;
  for (double tau : {0.3, 0.5, 0.7, 0.9}) {
    const auto fp = fixed_point(make_operator(gradient_cfg(tau, step_size_bound(tau)), mdp, mu), ValueTable(10),
                                1e-12, 1'000'000);
    ASSERT_TRUE(fp.converged);
    if (prev.size() != 0) {
      for (StateIndex s = 0; s < 10; ++s) EXPECT_GE(fp.values[s], prev[s] - 1e-9);
    }
    prev = fp.values;
  }
}

}  // namespace
}  // namespace vemlab
