#include "vemlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vemlab/error.hpp"
#include "vemlab/random.hpp"

namespace vemlab {

namespace {

double expectile_increment(double delta, double tau, double alpha) {
  return 2.0 * alpha * (delta > 0.0 ? tau * delta : (1.0 - tau) * delta);
}

double max_entry(const CriticPair& critics) {
  double top = critics.online[0].size() > 0 ? critics.online[0][0] : 0.0;
  for (const auto* tables : {&critics.online, &critics.target}) {
    for (const auto& table : *tables) {
      for (double x : table) top = std::max(top, x);
    }
  }
  return top;
}

struct StepRef {
  std::size_t trajectory;
  std::size_t t;
};

}  // namespace

std::string_view to_string(CriticLoss loss) { return loss == CriticLoss::squared ? "squared" : "expectile"; }

CriticLoss parse_critic_loss(std::string_view name) {
  if (name == "squared") return CriticLoss::squared;
  if (name == "expectile") return CriticLoss::expectile;
  throw ParameterError("unknown critic loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (memory_update_period == 0) throw ParameterError("memory_update_period must be positive");
  if (n_max == 0) throw ParameterError("n_max must be positive");
  if (eval_period == 0) throw ParameterError("eval_period must be positive");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ParameterError("kappa must lie in (0, 1]");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ParameterError("learning_rate must lie in (0, 1]");
  if (!(init_noise >= 0.0)) throw ParameterError("init_noise must be >= 0");
  OperatorConfig op{tau, expectile_step, OperatorKind::expectile_gradient, 0.0};
  op.validate();
}

CriticPair CriticPair::initialize(std::size_t n_states, std::uint64_t seed, double noise_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CriticPair pair;
  for (auto& table : pair.online) {
    table = ValueTable(n_states);
    for (double& x : table) x = noise_scale * unit(rng);
  }
  pair.target = pair.online;
  return pair;
}

CriticPair evl_step(const CriticPair& critics, std::span<const TransitionSample> batch, double gamma,
                    const TrainConfig& cfg, WarningCounter* warnings) {
  if (batch.empty()) {
    if (warnings != nullptr) ++warnings->empty_batches;
    return critics;
  }
  CriticPair out = critics;
  const std::size_t n_states = critics.online[0].size();
  std::vector<double> target_sum(n_states);
  std::vector<std::size_t> visits(n_states);
  for (std::size_t i = 0; i < critics.online.size(); ++i) {
    const ValueTable& lagged = critics.target[i];
    std::fill(target_sum.begin(), target_sum.end(), 0.0);
    std::fill(visits.begin(), visits.end(), 0);
    for (const auto& sample : batch) {
      if (sample.s >= n_states || sample.s_next >= n_states) throw ParameterError("evl_step: state out of range");
      const double delta = sample.r + gamma * lagged[sample.s_next] - lagged[sample.s];
      target_sum[sample.s] += lagged[sample.s] + expectile_increment(delta, cfg.tau, cfg.expectile_step);
      ++visits[sample.s];
    }
    for (StateIndex s = 0; s < n_states; ++s) {
      if (visits[s] == 0) continue;
      const double mean_target = target_sum[s] / static_cast<double>(visits[s]);
      out.online[i][s] += cfg.learning_rate * (mean_target - out.online[i][s]);
    }
  }
  return out;
}

CriticPair polyak_update(const CriticPair& critics, double kappa) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ParameterError("kappa must lie in (0, 1]");
  CriticPair out = critics;
  for (std::size_t i = 0; i < out.target.size(); ++i) {
    for (StateIndex s = 0; s < out.target[i].size(); ++s) {
      out.target[i][s] = kappa * critics.online[i][s] + (1.0 - kappa) * critics.target[i][s];
    }
  }
  return out;
}

TrainResult train_vem(const TabularMdp& mdp, OfflineDataset dataset, const TrainConfig& cfg, const WeightingFn& f,
                      const MetricsSink& sink) {
  cfg.validate();
  f.validate();
  mdp.validate();
  dataset.validate();
  if (dataset.n_states != mdp.n_states || dataset.n_actions != mdp.n_actions) {
    throw ParameterError("train_vem: dataset dimensions do not match the MDP");
  }

  const PlanningConfig plan{cfg.n_max, mdp.gamma};
  TrainResult result;
  result.critics = CriticPair::initialize(mdp.n_states, derive_seed(cfg.seed, streams::kCriticInit), cfg.init_noise);
  result.policy = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
  if (!dataset.has_planned_returns()) update_memory_in_place(dataset, result.critics.target, plan);
  result.max_critic_value = max_entry(result.critics);

  std::vector<StepRef> index;
  std::vector<bool> visited(mdp.n_states, false);
  for (std::size_t k = 0; k < dataset.trajectories.size(); ++k) {
    const auto& traj = dataset.trajectories[k];
    for (std::size_t t = 0; t < traj.length(); ++t) {
      index.push_back({k, t});
      visited[traj.steps[t].s] = true;
    }
  }
  const ValueTable v_star = solve_optimal_values(mdp);
  std::size_t n_visited = 0;
  double mean_v_star = 0.0;
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    if (!visited[s]) continue;
    ++n_visited;
    mean_v_star += v_star[s];
  }
  mean_v_star /= static_cast<double>(n_visited);

  std::mt19937_64 rng(derive_seed(cfg.seed, streams::kBatchSampling));
  std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
  std::vector<double> residual_sum(mdp.n_states);
  std::vector<std::size_t> visits(mdp.n_states);

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    MetricsRecord record;
    record.step = step;
    for (std::size_t i = 0; i < result.critics.online.size(); ++i) {
      ValueTable& critic = result.critics.online[i];
      std::fill(residual_sum.begin(), residual_sum.end(), 0.0);
      std::fill(visits.begin(), visits.end(), 0);
      double loss = 0.0;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const StepRef ref = index[pick(rng)];
        const auto& traj = dataset.trajectories[ref.trajectory];
        const StateIndex s = traj.steps[ref.t].s;
        const double residual = traj.planned_returns[i][ref.t] - critic[s];
        loss += residual * residual;
        residual_sum[s] += cfg.critic_loss == CriticLoss::squared
                               ? residual
                               : expectile_increment(residual, cfg.tau, cfg.expectile_step);
        ++visits[s];
      }
      for (StateIndex s = 0; s < mdp.n_states; ++s) {
        if (visits[s] > 0) critic[s] += cfg.learning_rate * residual_sum[s] / static_cast<double>(visits[s]);
      }
      (i == 0 ? record.critic_loss_1 : record.critic_loss_2) = loss / static_cast<double>(cfg.batch_size);
    }

    auto records = apply_weighting(compute_advantages(dataset, result.critics.online), f);
    result.policy = fit_policy(records, mdp.n_states, mdp.n_actions);

    if (step % cfg.memory_update_period == 0) {
      result.critics = polyak_update(result.critics, cfg.kappa);
      update_memory_in_place(dataset, result.critics.target, plan);
    }
    result.max_critic_value = std::max(result.max_critic_value, max_entry(result.critics));

    if (step % cfg.eval_period == 0 || step == cfg.total_steps) {
      double mean_estimate = 0.0;
      for (StateIndex s = 0; s < mdp.n_states; ++s) {
        if (visited[s]) mean_estimate += 0.5 * (result.critics.online[0][s] + result.critics.online[1][s]);
      }
      mean_estimate /= static_cast<double>(n_visited);
      record.policy_return = evaluate_policy(mdp, result.policy);
      record.mean_value = mean_estimate;
      record.value_error = mean_estimate - mean_v_star;
      record.max_value = result.max_critic_value;
      result.metrics.push_back(record);
      if (sink) sink(record);
    }
  }
  result.memory = std::move(dataset);
  return result;
}

std::size_t steps_to_fraction_of_final(std::span<const MetricsRecord> metrics, double fraction) {
  if (metrics.empty()) return 0;
  const double goal = fraction * metrics.back().policy_return;
  for (const auto& record : metrics) {
    if (record.policy_return >= goal) return record.step;
  }
  return metrics.back().step;
}

}  // namespace vemlab
