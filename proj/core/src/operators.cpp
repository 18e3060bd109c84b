#include "vemlab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "vemlab/error.hpp"

namespace vemlab {

namespace {

constexpr double kBisectionTolerance = 1e-12;
constexpr int kMaxHalvings = 200;
constexpr double kStepBoundSlack = 1e-12;

void check_dims(const ValueTable& v, const TabularMdp& mdp) {
  if (v.size() != mdp.n_states) throw ParameterError("value table has " + std::to_string(v.size()) +
                                                     " entries, MDP has " + std::to_string(mdp.n_states));
}

void check_dims(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu) {
  check_dims(v, mdp);
  if (mu.n_states() != mdp.n_states || mu.n_actions() != mdp.n_actions) {
    throw ParameterError("policy dimensions do not match the MDP");
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("tau must lie strictly inside (0, 1)");
}

bool is_gradient_kind(OperatorKind kind) {
  return kind == OperatorKind::expectile_gradient || kind == OperatorKind::quantile_gradient;
}

// Shared skeleton of the two gradient operators: out(s) = V(s) + 2 alpha E_mu[step(delta)].
template <typename Step>
ValueTable gradient_step(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                         const OperatorConfig& cfg, GaussianNoise* noise, Step&& step) {
  check_dims(v, mdp, mu);
  cfg.validate();
  if (cfg.noise_sigma > 0.0 && noise == nullptr) {
    throw ParameterError("noise_sigma > 0 requires a noise source");
  }
  ValueTable out(mdp.n_states);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    double increment = 0.0;
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      const double delta = mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)] - v[s];
      increment += mu.prob(s, a) * step(delta);
    }
    out[s] = v[s] + 2.0 * cfg.alpha * increment;
  }
  if (cfg.noise_sigma > 0.0) noise->perturb(out);
  return out;
}

template <typename Part>
ValueTable half_operator(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu, Part&& part) {
  check_dims(v, mdp, mu);
  ValueTable out(mdp.n_states);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    double acc = 0.0;
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      acc += mu.prob(s, a) * part(mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)] - v[s]);
    }
    out[s] = v[s] + acc;
  }
  return out;
}

}  // namespace

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::expectation: return "expectation";
    case OperatorKind::optimality: return "optimality";
    case OperatorKind::expectile_exact: return "expectile_exact";
    case OperatorKind::expectile_gradient: return "expectile_gradient";
    case OperatorKind::quantile_gradient: return "quantile_gradient";
  }
  return "unknown";
}

OperatorKind parse_operator_kind(std::string_view name) {
  for (auto kind : {OperatorKind::expectation, OperatorKind::optimality, OperatorKind::expectile_exact,
                    OperatorKind::expectile_gradient, OperatorKind::quantile_gradient}) {
    if (to_string(kind) == name) return kind;
  }
  throw ParameterError("unknown operator kind '" + std::string(name) + "'");
}

void OperatorConfig::validate() const {
  if (kind != OperatorKind::expectation && kind != OperatorKind::optimality) check_tau(tau);
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ParameterError("noise_sigma must be >= 0");
  if (is_gradient_kind(kind)) {
    if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
    if (2.0 * alpha * std::max(tau, 1.0 - tau) > 1.0 + kStepBoundSlack) {
      throw ParameterError("step size alpha=" + std::to_string(alpha) + " violates 2ατ ≤ 1 and 2α(1−τ) ≤ 1 " +
                           "(alpha must be <= " + std::to_string(step_size_bound(tau)) + ")");
    }
  }
}

double step_size_bound(double tau) {
  check_tau(tau);
  return 1.0 / (2.0 * std::max(tau, 1.0 - tau));
}

double contraction_modulus(double tau, double alpha, double gamma) {
  return 1.0 - 2.0 * alpha * (1.0 - gamma) * std::min(tau, 1.0 - tau);
}

void GaussianNoise::perturb(ValueTable& v) {
  std::normal_distribution<double> gauss(0.0, sigma_);
  for (double& x : v) x += gauss(rng_);
}

ValueTable apply_expectation(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu) {
  check_dims(v, mdp, mu);
  ValueTable out(mdp.n_states);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    double acc = 0.0;
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      acc += mu.prob(s, a) * (mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)]);
    }
    out[s] = acc;
  }
  return out;
}

ValueTable apply_optimality(const ValueTable& v, const TabularMdp& mdp) {
  check_dims(v, mdp);
  ValueTable out(mdp.n_states);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    double best = mdp.reward_at(s, 0) + mdp.gamma * v[mdp.next(s, 0)];
    for (ActionIndex a = 1; a < mdp.n_actions; ++a) {
      best = std::max(best, mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)]);
    }
    out[s] = best;
  }
  return out;
}

double weighted_expectile(std::span<const double> values, std::span<const double> weights, double tau) {
  check_tau(tau);
  if (values.size() != weights.size() || values.empty()) {
    throw ParameterError("weighted_expectile: values and weights must be non-empty and equal length");
  }
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    lo = any ? std::min(lo, values[i]) : values[i];
    hi = any ? std::max(hi, values[i]) : values[i];
    any = true;
  }
  if (!any) throw ParameterError("weighted_expectile: no positive weight");

  // tau E[(Z - v)+] - (1 - tau) E[(v - Z)+] is strictly decreasing in v.
  auto first_order = [&](double v) {
    double up = 0.0;
    double down = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      const double d = values[i] - v;
      if (d > 0.0) up += weights[i] * d;
      else down -= weights[i] * d;
    }
    return tau * up - (1.0 - tau) * down;
  };
  for (int i = 0; i < kMaxHalvings && hi - lo > kBisectionTolerance; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (first_order(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

ValueTable apply_expectile_exact(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                 double tau) {
  check_dims(v, mdp, mu);
  check_tau(tau);
  ValueTable out(mdp.n_states);
  std::vector<double> backups(mdp.n_actions);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      backups[a] = mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)];
    }
    out[s] = weighted_expectile(backups, mu.row(s), tau);
  }
  return out;
}

ValueTable apply_expectile_gradient(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                    const OperatorConfig& cfg, GaussianNoise* noise) {
  const double tau = cfg.tau;
  return gradient_step(v, mdp, mu, cfg, noise, [tau](double delta) {
    return delta > 0.0 ? tau * delta : (1.0 - tau) * delta;
  });
}

ValueTable apply_quantile_gradient(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                   const OperatorConfig& cfg, GaussianNoise* noise) {
  const double tau = cfg.tau;
  return gradient_step(v, mdp, mu, cfg, noise, [tau](double delta) {
    if (delta > 0.0) return tau;
    if (delta < 0.0) return -(1.0 - tau);
    return 0.0;
  });
}

ValueTable apply_positive_part(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu) {
  return half_operator(v, mdp, mu, [](double d) { return std::max(d, 0.0); });
}

ValueTable apply_negative_part(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu) {
  return half_operator(v, mdp, mu, [](double d) { return std::min(d, 0.0); });
}

ValueOperator make_operator(const OperatorConfig& cfg, const TabularMdp& mdp, const TabularPolicy& mu,
                            std::uint64_t noise_seed) {
  cfg.validate();
  auto model = std::make_shared<const TabularMdp>(mdp);
  auto behavior = std::make_shared<const TabularPolicy>(mu);
  std::shared_ptr<GaussianNoise> noise;
  if (cfg.noise_sigma > 0.0) noise = std::make_shared<GaussianNoise>(noise_seed, cfg.noise_sigma);

  return [cfg, model, behavior, noise](const ValueTable& v) {
    ValueTable out;
    switch (cfg.kind) {
      case OperatorKind::expectation: out = apply_expectation(v, *model, *behavior); break;
      case OperatorKind::optimality: out = apply_optimality(v, *model); break;
      case OperatorKind::expectile_exact: out = apply_expectile_exact(v, *model, *behavior, cfg.tau); break;
      case OperatorKind::expectile_gradient:
        return apply_expectile_gradient(v, *model, *behavior, cfg, noise.get());
      case OperatorKind::quantile_gradient:
        return apply_quantile_gradient(v, *model, *behavior, cfg, noise.get());
    }
    if (noise) noise->perturb(out);
    return out;
  };
}

FixedPointResult fixed_point(const ValueOperator& op, ValueTable v0, double tol, std::size_t max_iters) {
  if (!(tol > 0.0)) throw ParameterError("fixed_point: tol must be positive");
  FixedPointResult result{std::move(v0), 0, false};
  while (result.iterations < max_iters) {
    ValueTable next = op(result.values);
    ++result.iterations;
    if (!next.all_finite()) {
      result.values = std::move(next);
      break;
    }
    const double step = sup_distance(next, result.values);
    result.values = std::move(next);
    if (step <= tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace vemlab
