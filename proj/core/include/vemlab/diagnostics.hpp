#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vemlab/mdp.hpp"
#include "vemlab/memory.hpp"
#include "vemlab/operators.hpp"

namespace vemlab {

/// Empirical Lipschitz constant in the sup norm: the largest
/// ||op(V1) - op(V2)|| / ||V1 - V2|| over `n_pairs` random pairs with entries
/// uniform in [-value_scale, value_scale]. Sampling can only under-report
/// the true supremum.
double estimate_contraction(const ValueOperator& op, std::size_t n_states, std::size_t n_pairs,
                            double value_scale, std::uint64_t seed);

/// Effective per-iteration rate toward `fix` when iterating op from v0:
/// (e_K / e_0)^(1/K) with e_k = ||V_k - fix||_inf and K the first iteration
/// with e_K <= reduction * e_0 (or max_iters). Returns 0 if v0 == fix.
double estimate_convergence_rate(const ValueOperator& op, const ValueTable& fix, const ValueTable& v0,
                                 double reduction, std::size_t max_iters);

/// ||fix(op) - v_star||_inf, iterating op from v0 (zeros when empty).
/// Throws StateError if the iteration does not converge within max_iters.
double measure_bias(const ValueOperator& op, const ValueTable& v_star, double tol,
                    std::size_t max_iters = 10'000'000, ValueTable v0 = {});

/// Builds one stochastic operator per draw from the supplied generator.
using StochasticOperatorFactory = std::function<ValueOperator(std::mt19937_64&)>;

/// sqrt(mean over draws of ||T_hat V - T V||_2^2) at V = probe.
double measure_variance(const ValueOperator& exact, const StochasticOperatorFactory& factory,
                        const ValueTable& probe, std::size_t n_draws, std::uint64_t seed);

/// Empirical behavior policy from `samples_per_state` i.i.d. actions per state.
TabularPolicy resample_behavior(const TabularPolicy& mu, std::size_t samples_per_state, std::mt19937_64& rng);

/// Values-only closure over vem_operator.
ValueOperator make_vem_operator(const TabularMdp& mdp, const TabularPolicy& mu, const OperatorConfig& op_cfg,
                                const PlanningConfig& plan_cfg);

/// VEM operators built on resampled behavior policies.
StochasticOperatorFactory make_resampled_vem_factory(const TabularMdp& mdp, const TabularPolicy& mu,
                                                     const OperatorConfig& op_cfg, const PlanningConfig& plan_cfg,
                                                     std::size_t samples_per_state);

/// Shared knobs of the toy-MDP protocols. Every field is echoed into the CSV
/// outputs so a results file describes how it was produced.
struct ProtocolSettings {
  std::size_t n_states = 20;
  std::size_t n_actions = 4;
  double gamma = 0.9;
  double reward_low = 0.0;
  double reward_high = 1.0;
  /// Behavior temperature for the n_max sweep.
  double temperature = 1.0;
  /// Rollout horizon used by the behavior-quality sweep.
  std::size_t n_max = 4;
  std::size_t n_pairs = 1000;
  double value_scale = 10.0;
  /// Error reduction that ends the convergence-rate run started at V = 0.
  double convergence_reduction = 1e-6;
  std::size_t samples_per_state = 1;
  std::size_t variance_draws = 200;
  double fixed_point_tol = 1e-12;
  std::size_t max_iters = 10'000'000;
  /// Noisy-operator runs stop after noise_iters iterations, or once the
  /// standard a-posteriori bound m/(1-m) * step (m the operator's modulus)
  /// falls below noise_step_tol.
  std::size_t noise_iters = 2000;
  double noise_step_tol = 1e-8;
  /// Worker threads for the seed grid; results do not depend on it.
  std::size_t jobs = 1;

  TabularMdp mdp_for_seed(std::uint64_t seed) const;
  void validate() const;

  friend bool operator==(const ProtocolSettings&, const ProtocolSettings&) = default;
};

/// Alpha at its step-size bound for tau.
OperatorConfig vem_operator_config(double tau);

struct OperatorDiagnostics {
  double contraction_rate = 0.0;
  /// Effective rate from the pessimistic start V = 0 toward the fixed point.
  double convergence_rate = 0.0;
  double contraction_bound = 0.0;
  double fixed_point_bias = 0.0;
  double update_variance = 0.0;
  /// counts of n*(s) = 1..n_max at the probe point V = 0.
  std::vector<std::size_t> n_star_histogram;
  double tau = 0.0;
  double alpha = 0.0;
  std::size_t n_max = 0;
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

/// Contraction, bias and variance of the VEM operator on one MDP.
OperatorDiagnostics diagnose_vem(const TabularMdp& mdp, double temperature, double tau, std::size_t n_max,
                                 const ProtocolSettings& settings, std::uint64_t seed);

/// Seed-averaged diagnostics for one grid point.
struct DiagnosticsRow {
  double tau = 0.0;
  std::size_t n_max = 0;
  double temperature = 0.0;
  double alpha = 0.0;
  double contraction = 0.0;      ///< mean over seeds
  double max_contraction = 0.0;  ///< worst seed
  double convergence_rate = 0.0;
  double contraction_bound = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double mean_n_star = 0.0;
  std::size_t n_seeds = 0;

  friend bool operator==(const DiagnosticsRow&, const DiagnosticsRow&) = default;
};

/// Grid over (tau, n_max) with mu = softmax(Q* / settings.temperature).
std::vector<DiagnosticsRow> run_figure2_protocol(std::span<const std::uint64_t> seeds, std::span<const double> taus,
                                                 std::span<const std::size_t> n_maxes,
                                                 const ProtocolSettings& settings);

/// Grid over (temperature, tau) at n_max = settings.n_max.
std::vector<DiagnosticsRow> run_figure3_protocol(std::span<const std::uint64_t> seeds,
                                                 std::span<const double> temperatures, std::span<const double> taus,
                                                 const ProtocolSettings& settings);

struct NoisyCurveRow {
  std::string op;  ///< "expectile_gradient" or "optimality"
  double tau = 0.0;
  double noise_sigma = 0.0;
  double mean_value = 0.0;       ///< terminal mean of V, seed-averaged
  double sup_error = 0.0;        ///< terminal ||V - V*||_inf, seed-averaged
  double mean_v_star = 0.0;
  double mean_v_behavior = 0.0;
  std::size_t n_seeds = 0;

  friend bool operator==(const NoisyCurveRow&, const NoisyCurveRow&) = default;
};

/// Noisy expectile iteration per tau, plus noisy and noiseless optimality
/// iteration, all from V = 0 with mu = softmax(Q* / settings.temperature).
std::vector<NoisyCurveRow> run_figure1_protocol(std::span<const std::uint64_t> seeds, double noise_sigma,
                                                std::span<const double> taus, const ProtocolSettings& settings);

std::string diagnostics_csv(std::span<const DiagnosticsRow> rows, const ProtocolSettings& settings,
                            std::span<const std::uint64_t> seeds);
std::string noisy_curve_csv(std::span<const NoisyCurveRow> rows, const ProtocolSettings& settings,
                            std::span<const std::uint64_t> seeds);

/// Column headers of the two CSV schemas, in output order.
std::vector<std::string> diagnostics_csv_columns();
std::vector<std::string> noisy_curve_csv_columns();

}  // namespace vemlab
