#include "vemlab/diagnostics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <thread>

#include "vemlab/error.hpp"
#include "vemlab/random.hpp"

namespace vemlab {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t jobs, Fn&& fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> out(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

ValueTable random_values(std::size_t n, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  ValueTable v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double l2_squared(const ValueTable& a, const ValueTable& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total;
}

std::string join_seeds(std::span<const std::uint64_t> seeds) {
  return fmt::format("{}", fmt::join(seeds, ";"));
}

DiagnosticsRow average(std::span<const OperatorDiagnostics> runs) {
  DiagnosticsRow row;
  const auto& first = runs.front();
  row.tau = first.tau;
  row.n_max = first.n_max;
  row.temperature = first.temperature;
  row.alpha = first.alpha;
  row.contraction_bound = first.contraction_bound;
  row.n_seeds = runs.size();
  for (const auto& d : runs) {
    row.contraction += d.contraction_rate;
    row.max_contraction = std::max(row.max_contraction, d.contraction_rate);
    row.convergence_rate += d.convergence_rate;
    row.bias += d.fixed_point_bias;
    row.variance += d.update_variance;
    double states = 0.0;
    double weighted = 0.0;
    for (std::size_t n = 0; n < d.n_star_histogram.size(); ++n) {
      states += static_cast<double>(d.n_star_histogram[n]);
      weighted += static_cast<double>((n + 1) * d.n_star_histogram[n]);
    }
    row.mean_n_star += weighted / states;
  }
  const double count = static_cast<double>(runs.size());
  row.contraction /= count;
  row.convergence_rate /= count;
  row.bias /= count;
  row.variance /= count;
  row.mean_n_star /= count;
  return row;
}

}  // namespace

double estimate_contraction(const ValueOperator& op, std::size_t n_states, std::size_t n_pairs,
                            double value_scale, std::uint64_t seed) {
  if (n_states == 0 || n_pairs == 0) throw ParameterError("estimate_contraction: need states and pairs");
  if (!(value_scale > 0.0)) throw ParameterError("estimate_contraction: value_scale must be positive");
  std::mt19937_64 rng(seed);
  double rate = 0.0;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const ValueTable v1 = random_values(n_states, value_scale, rng);
    const ValueTable v2 = random_values(n_states, value_scale, rng);
    const double gap = sup_distance(v1, v2);
    if (gap == 0.0) continue;
    rate = std::max(rate, sup_distance(op(v1), op(v2)) / gap);
  }
  return rate;
}

double estimate_convergence_rate(const ValueOperator& op, const ValueTable& fix, const ValueTable& v0,
                                 double reduction, std::size_t max_iters) {
  if (!(reduction > 0.0 && reduction < 1.0)) throw ParameterError("estimate_convergence_rate: reduction must lie in (0, 1)");
  const double initial = sup_distance(v0, fix);
  if (initial == 0.0) return 0.0;
  ValueTable v = v0;
  double error = initial;
  std::size_t k = 0;
  while (k < max_iters && error > reduction * initial) {
    v = op(v);
    error = sup_distance(v, fix);
    ++k;
  }
  if (error == 0.0) return 0.0;
  return std::pow(error / initial, 1.0 / static_cast<double>(k));
}

double measure_bias(const ValueOperator& op, const ValueTable& v_star, double tol, std::size_t max_iters,
                    ValueTable v0) {
  if (v0.size() == 0) v0 = ValueTable(v_star.size());
  const auto fix = fixed_point(op, std::move(v0), tol, max_iters);
  if (!fix.converged) {
    throw StateError("measure_bias: no convergence after " + std::to_string(fix.iterations) + " iterations");
  }
  return sup_distance(fix.values, v_star);
}

double measure_variance(const ValueOperator& exact, const StochasticOperatorFactory& factory,
                        const ValueTable& probe, std::size_t n_draws, std::uint64_t seed) {
  if (n_draws == 0) throw ParameterError("measure_variance: n_draws must be positive");
  const ValueTable reference = exact(probe);
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (std::size_t k = 0; k < n_draws; ++k) {
    const ValueOperator sampled = factory(rng);
    total += l2_squared(sampled(probe), reference);
  }
  return std::sqrt(total / static_cast<double>(n_draws));
}

TabularPolicy resample_behavior(const TabularPolicy& mu, std::size_t samples_per_state, std::mt19937_64& rng) {
  if (samples_per_state == 0) throw ParameterError("resample_behavior: samples_per_state must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n_actions = mu.n_actions();
  std::vector<double> probs(mu.n_states() * n_actions, 0.0);
  const double share = 1.0 / static_cast<double>(samples_per_state);
  for (StateIndex s = 0; s < mu.n_states(); ++s) {
    const auto row = mu.row(s);
    for (std::size_t k = 0; k < samples_per_state; ++k) {
      const double u = unit(rng);
      double cumulative = 0.0;
      ActionIndex pick = n_actions - 1;
      for (ActionIndex a = 0; a < n_actions; ++a) {
        cumulative += row[a];
        if (u < cumulative) {
          pick = a;
          break;
        }
      }
      probs[s * n_actions + pick] += share;
    }
    // Renormalize so repeated shares sum to exactly one.
    double total = 0.0;
    for (ActionIndex a = 0; a < n_actions; ++a) total += probs[s * n_actions + a];
    for (ActionIndex a = 0; a < n_actions; ++a) probs[s * n_actions + a] /= total;
  }
  return TabularPolicy(mu.n_states(), n_actions, std::move(probs));
}

ValueOperator make_vem_operator(const TabularMdp& mdp, const TabularPolicy& mu, const OperatorConfig& op_cfg,
                                const PlanningConfig& plan_cfg) {
  op_cfg.validate();
  plan_cfg.validate();
  auto model = std::make_shared<const TabularMdp>(mdp);
  auto behavior = std::make_shared<const TabularPolicy>(mu);
  return [model, behavior, op_cfg, plan_cfg](const ValueTable& v) {
    return vem_operator(v, *model, *behavior, op_cfg, plan_cfg).values;
  };
}

StochasticOperatorFactory make_resampled_vem_factory(const TabularMdp& mdp, const TabularPolicy& mu,
                                                     const OperatorConfig& op_cfg, const PlanningConfig& plan_cfg,
                                                     std::size_t samples_per_state) {
  auto model = std::make_shared<const TabularMdp>(mdp);
  auto behavior = std::make_shared<const TabularPolicy>(mu);
  return [=](std::mt19937_64& rng) {
    return make_vem_operator(*model, resample_behavior(*behavior, samples_per_state, rng), op_cfg, plan_cfg);
  };
}

TabularMdp ProtocolSettings::mdp_for_seed(std::uint64_t seed) const {
  RandomMdpOptions options;
  options.seed = seed;
  options.n_states = n_states;
  options.n_actions = n_actions;
  options.reward_low = reward_low;
  options.reward_high = reward_high;
  options.gamma = gamma;
  return generate_random_mdp(options);
}

void ProtocolSettings::validate() const {
  if (n_states == 0 || n_actions == 0) throw ParameterError("protocol: n_states and n_actions must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("protocol: gamma must lie in [0, 1)");
  if (!(reward_low <= reward_high)) throw ParameterError("protocol: reward_low must not exceed reward_high");
  if (!(temperature > 0.0)) throw ParameterError("protocol: temperature must be positive");
  if (n_max == 0) throw ParameterError("protocol: n_max must be positive");
  if (n_pairs == 0 || variance_draws == 0 || samples_per_state == 0) {
    throw ParameterError("protocol: n_pairs, variance_draws and samples_per_state must be positive");
  }
  if (!(value_scale > 0.0)) throw ParameterError("protocol: value_scale must be positive");
  if (!(convergence_reduction > 0.0 && convergence_reduction < 1.0)) {
    throw ParameterError("protocol: convergence_reduction must lie in (0, 1)");
  }
  if (!(fixed_point_tol > 0.0) || !(noise_step_tol > 0.0)) throw ParameterError("protocol: tolerances must be positive");
  if (max_iters == 0 || noise_iters == 0) throw ParameterError("protocol: iteration caps must be positive");
  if (jobs == 0) throw ParameterError("protocol: jobs must be positive");
}

OperatorConfig vem_operator_config(double tau) {
  return OperatorConfig{tau, step_size_bound(tau), OperatorKind::expectile_gradient, 0.0};
}

OperatorDiagnostics diagnose_vem(const TabularMdp& mdp, double temperature, double tau, std::size_t n_max,
                                 const ProtocolSettings& settings, std::uint64_t seed) {
  const TabularPolicy mu = softmax_behavior_policy(mdp, temperature, settings.fixed_point_tol);
  const OperatorConfig op_cfg = vem_operator_config(tau);
  const PlanningConfig plan{n_max, mdp.gamma};
  const ValueOperator op = make_vem_operator(mdp, mu, op_cfg, plan);

  OperatorDiagnostics d;
  d.tau = tau;
  d.alpha = op_cfg.alpha;
  d.n_max = n_max;
  d.temperature = temperature;
  d.seed = seed;
  d.contraction_bound = contraction_modulus(tau, op_cfg.alpha, mdp.gamma);
  d.contraction_rate = estimate_contraction(op, mdp.n_states, settings.n_pairs, settings.value_scale,
                                            derive_seed(seed, streams::kValuePairs));
  const auto fix = fixed_point(op, ValueTable(mdp.n_states), settings.fixed_point_tol, settings.max_iters);
  if (!fix.converged) throw StateError("diagnose_vem: fixed-point iteration did not converge");
  d.convergence_rate = estimate_convergence_rate(op, fix.values, ValueTable(mdp.n_states),
                                                 settings.convergence_reduction, settings.max_iters);
  d.fixed_point_bias = sup_distance(fix.values, solve_optimal_values(mdp, settings.fixed_point_tol));

  const ValueTable probe(mdp.n_states, 0.0);
  d.update_variance =
      measure_variance(op, make_resampled_vem_factory(mdp, mu, op_cfg, plan, settings.samples_per_state), probe,
                       settings.variance_draws, derive_seed(seed, streams::kResampling));
  d.n_star_histogram.assign(n_max, 0);
  for (std::size_t n : vem_operator(probe, mdp, mu, op_cfg, plan).n_star) ++d.n_star_histogram[n - 1];
  return d;
}

std::vector<DiagnosticsRow> run_figure2_protocol(std::span<const std::uint64_t> seeds, std::span<const double> taus,
                                                 std::span<const std::size_t> n_maxes,
                                                 const ProtocolSettings& settings) {
  if (seeds.empty()) throw ParameterError("protocol needs at least one seed");
  // per_seed[k][g] with grid index g = tau-major, n_max-minor.
  auto per_seed = parallel_map(seeds.size(), settings.jobs, [&](std::size_t k) {
    const TabularMdp mdp = settings.mdp_for_seed(seeds[k]);
    std::vector<OperatorDiagnostics> grid;
    for (double tau : taus) {
      for (std::size_t n_max : n_maxes) {
        grid.push_back(diagnose_vem(mdp, settings.temperature, tau, n_max, settings, seeds[k]));
      }
    }
    return grid;
  });
  std::vector<DiagnosticsRow> rows;
  const std::size_t cells = taus.size() * n_maxes.size();
  for (std::size_t g = 0; g < cells; ++g) {
    std::vector<OperatorDiagnostics> runs;
    for (const auto& grid : per_seed) runs.push_back(grid[g]);
    rows.push_back(average(runs));
  }
  return rows;
}

std::vector<DiagnosticsRow> run_figure3_protocol(std::span<const std::uint64_t> seeds,
                                                 std::span<const double> temperatures, std::span<const double> taus,
                                                 const ProtocolSettings& settings) {
  if (seeds.empty()) throw ParameterError("protocol needs at least one seed");
  auto per_seed = parallel_map(seeds.size(), settings.jobs, [&](std::size_t k) {
    const TabularMdp mdp = settings.mdp_for_seed(seeds[k]);
    std::vector<OperatorDiagnostics> grid;
    for (double temperature : temperatures) {
      for (double tau : taus) {
        grid.push_back(diagnose_vem(mdp, temperature, tau, settings.n_max, settings, seeds[k]));
      }
    }
    return grid;
  });
  std::vector<DiagnosticsRow> rows;
  const std::size_t cells = temperatures.size() * taus.size();
  for (std::size_t g = 0; g < cells; ++g) {
    std::vector<OperatorDiagnostics> runs;
    for (const auto& grid : per_seed) runs.push_back(grid[g]);
    rows.push_back(average(runs));
  }
  return rows;
}

std::vector<NoisyCurveRow> run_figure1_protocol(std::span<const std::uint64_t> seeds, double noise_sigma,
                                                std::span<const double> taus, const ProtocolSettings& settings) {
  if (seeds.empty()) throw ParameterError("protocol needs at least one seed");
  if (!(noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be >= 0");

  struct Curve {
    std::string op;
    double tau;
    double sigma;
  };
  std::vector<Curve> curves;
  for (double tau : taus) curves.push_back({"expectile_gradient", tau, noise_sigma});
  curves.push_back({"optimality", 1.0, noise_sigma});
  curves.push_back({"optimality", 1.0, 0.0});

  struct Terminal {
    double mean_value;
    double sup_error;
  };
  struct SeedResult {
    std::vector<Terminal> terminals;
    double mean_v_star;
    double mean_v_behavior;
  };
  auto per_seed = parallel_map(seeds.size(), settings.jobs, [&](std::size_t k) {
    const TabularMdp mdp = settings.mdp_for_seed(seeds[k]);
    const TabularPolicy mu = softmax_behavior_policy(mdp, settings.temperature, settings.fixed_point_tol);
    const ValueTable v_star = solve_optimal_values(mdp, settings.fixed_point_tol);
    SeedResult out{{}, mean_value(v_star), mean_value(solve_behavior_values(mdp, mu, settings.fixed_point_tol))};
    for (const auto& curve : curves) {
      OperatorConfig cfg;
      double modulus = mdp.gamma;
      if (curve.op == "optimality") {
        cfg.kind = OperatorKind::optimality;
      } else {
        cfg = vem_operator_config(curve.tau);
        modulus = contraction_modulus(cfg.tau, cfg.alpha, mdp.gamma);
      }
      cfg.noise_sigma = curve.sigma;
      const ValueOperator op = make_operator(cfg, mdp, mu, derive_seed(seeds[k], streams::kOperatorNoise));
      const double step_tol = modulus > 0.0 ? settings.noise_step_tol * (1.0 - modulus) / modulus
                                            : settings.noise_step_tol;
      const auto run = fixed_point(op, ValueTable(mdp.n_states), step_tol, settings.noise_iters);
      out.terminals.push_back({mean_value(run.values), sup_distance(run.values, v_star)});
    }
    return out;
  });

  std::vector<NoisyCurveRow> rows;
  const double count = static_cast<double>(seeds.size());
  for (std::size_t c = 0; c < curves.size(); ++c) {
    NoisyCurveRow row;
    row.op = curves[c].op;
    row.tau = curves[c].tau;
    row.noise_sigma = curves[c].sigma;
    row.n_seeds = seeds.size();
    for (const auto& seed_result : per_seed) {
      row.mean_value += seed_result.terminals[c].mean_value / count;
      row.sup_error += seed_result.terminals[c].sup_error / count;
      row.mean_v_star += seed_result.mean_v_star / count;
      row.mean_v_behavior += seed_result.mean_v_behavior / count;
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> diagnostics_csv_columns() {
  return {"tau",
          "n_max",
          "temperature",
          "alpha",
          "contraction",
          "max_contraction",
          "convergence_rate",
          "contraction_bound",
          "bias",
          "variance",
          "mean_n_star",
          "n_seeds",
          "n_states",
          "n_actions",
          "gamma",
          "reward_low",
          "reward_high",
          "n_pairs",
          "value_scale",
          "convergence_reduction",
          "samples_per_state",
          "variance_draws",
          "fixed_point_tol",
          "seeds"};
}

std::vector<std::string> noisy_curve_csv_columns() {
  return {"operator",    "tau",        "noise_sigma", "mean_value",  "sup_error",    "mean_v_star",
          "mean_v_behavior", "n_seeds", "n_states",   "n_actions",   "gamma",        "reward_low",
          "reward_high", "temperature", "noise_iters", "noise_step_tol", "seeds"};
}

std::string diagnostics_csv(std::span<const DiagnosticsRow> rows, const ProtocolSettings& settings,
                            std::span<const std::uint64_t> seeds) {
  std::string out = fmt::format("{}\n", fmt::join(diagnostics_csv_columns(), ","));
  const std::string seed_list = join_seeds(seeds);
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.tau, r.n_max,
                       r.temperature, r.alpha, r.contraction, r.max_contraction, r.convergence_rate,
                       r.contraction_bound, r.bias, r.variance, r.mean_n_star, r.n_seeds, settings.n_states,
                       settings.n_actions, settings.gamma, settings.reward_low, settings.reward_high, settings.n_pairs,
                       settings.value_scale, settings.convergence_reduction, settings.samples_per_state,
                       settings.variance_draws, settings.fixed_point_tol, seed_list);
  }
  return out;
}

std::string noisy_curve_csv(std::span<const NoisyCurveRow> rows, const ProtocolSettings& settings,
                            std::span<const std::uint64_t> seeds) {
  std::string out = fmt::format("{}\n", fmt::join(noisy_curve_csv_columns(), ","));
  const std::string seed_list = join_seeds(seeds);
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.op, r.tau, r.noise_sigma,
                       r.mean_value, r.sup_error, r.mean_v_star, r.mean_v_behavior, r.n_seeds, settings.n_states,
                       settings.n_actions, settings.gamma, settings.reward_low, settings.reward_high,
                       settings.temperature, settings.noise_iters, settings.noise_step_tol, seed_list);
  }
  return out;
}

}  // namespace vemlab
