#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string_view>

#include "vemlab/mdp.hpp"

namespace vemlab {

enum class OperatorKind {
  expectation,         ///< Bellman expectation operator under mu.
  optimality,          ///< Bellman optimality operator.
  expectile_exact,     ///< argmin of the asymmetric squared loss over backups.
  expectile_gradient,  ///< one gradient step on the asymmetric squared loss.
  quantile_gradient,   ///< one subgradient step on the asymmetric absolute loss.
};

std::string_view to_string(OperatorKind kind);
/// Throws ParameterError on an unknown name.
OperatorKind parse_operator_kind(std::string_view name);

struct OperatorConfig {
  double tau = 0.5;
  double alpha = 1.0;
  OperatorKind kind = OperatorKind::expectile_gradient;
  /// Standard deviation of Gaussian noise added to every operator output.
  double noise_sigma = 0.0;

  /// Checks tau in (0, 1), alpha > 0, noise_sigma >= 0, and for the gradient
  /// kinds the step-size bound 2*alpha*max(tau, 1 - tau) <= 1.
  void validate() const;

  friend bool operator==(const OperatorConfig&, const OperatorConfig&) = default;
};

/// One observed transition (s, a, r, s').
struct TransitionSample {
  StateIndex s = 0;
  ActionIndex a = 0;
  double r = 0.0;
  StateIndex s_next = 0;

  friend bool operator==(const TransitionSample&, const TransitionSample&) = default;
};

/// Largest admissible gradient step: 1 / (2 max(tau, 1 - tau)).
double step_size_bound(double tau);

/// Contraction modulus of the gradient expectile operator,
/// 1 - 2 alpha (1 - gamma) min(tau, 1 - tau).
double contraction_modulus(double tau, double alpha, double gamma);

/// Seeded i.i.d. Gaussian perturbation of operator outputs.
class GaussianNoise {
 public:
  GaussianNoise(std::uint64_t seed, double sigma) : rng_(seed), sigma_(sigma) {}
  void perturb(ValueTable& v);
  double sigma() const noexcept { return sigma_; }

 private:
  std::mt19937_64 rng_;
  double sigma_;
};

/// out(s) = sum_a mu(a|s) [r(s,a) + gamma V(s')].
ValueTable apply_expectation(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu);

/// out(s) = max_a [r(s,a) + gamma V(s')].
ValueTable apply_optimality(const ValueTable& v, const TabularMdp& mdp);

/// tau-expectile of a weighted sample: the root of
/// tau * E[(Z - v)+] = (1 - tau) * E[(v - Z)+], found by bisection between the
/// smallest and largest support point (tolerance 1e-12, at most 200 halvings).
/// Zero-weight points are ignored.
double weighted_expectile(std::span<const double> values, std::span<const double> weights, double tau);

/// out(s) = tau-expectile of {r(s,a) + gamma V(s')} weighted by mu(.|s).
ValueTable apply_expectile_exact(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                 double tau);

/// out(s) = V(s) + 2 alpha sum_a mu(a|s) [tau [delta]+ + (1 - tau) [delta]-]
/// with delta = r(s,a) + gamma V(s') - V(s). delta == 0 is routed to the
/// negative branch (both branches are zero there).
///
/// If cfg.noise_sigma > 0 a noise source is required and perturbs the output.
ValueTable apply_expectile_gradient(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                    const OperatorConfig& cfg, GaussianNoise* noise = nullptr);

/// Asymmetric absolute-loss counterpart of apply_expectile_gradient:
/// out(s) = V(s) + 2 alpha sum_a mu(a|s) [tau 1{delta > 0} - (1 - tau) 1{delta < 0}].
/// The step has fixed magnitude regardless of |delta|.
ValueTable apply_quantile_gradient(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                                   const OperatorConfig& cfg, GaussianNoise* noise = nullptr);

/// Half operators: V(s) + E_mu[[delta]+] and V(s) + E_mu[[delta]-]. Both are
/// non-expansions and T_tau = (1 - 2a) I + 2a tau T+ + 2a (1 - tau) T-.
ValueTable apply_positive_part(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu);
ValueTable apply_negative_part(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu);

using ValueOperator = std::function<ValueTable(const ValueTable&)>;

/// Binds an operator of kind cfg.kind to copies of `mdp` and `mu`. With
/// cfg.noise_sigma > 0 the closure owns a GaussianNoise seeded by
/// `noise_seed`, so successive calls draw fresh noise.
ValueOperator make_operator(const OperatorConfig& cfg, const TabularMdp& mdp, const TabularPolicy& mu,
                            std::uint64_t noise_seed = 0);

struct FixedPointResult {
  ValueTable values;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Iterates `op` from v0 until ||V_{k+1} - V_k||_inf <= tol or max_iters
/// applications have been made.
FixedPointResult fixed_point(const ValueOperator& op, ValueTable v0, double tol, std::size_t max_iters);

}  // namespace vemlab
