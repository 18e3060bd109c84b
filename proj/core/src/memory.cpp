#include "vemlab/memory.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "vemlab/error.hpp"

namespace vemlab {

namespace {

std::size_t sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double cumulative = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    cumulative += probs[a];
    if (u < cumulative) return a;
  }
  // Rounding left u above the final cumulative sum; take the last supported action.
  for (std::size_t a = probs.size(); a-- > 0;) {
    if (probs[a] > 0.0) return a;
  }
  return 0;
}

void check_trajectory_input(const Trajectory& traj, const ValueTable& v_hat) {
  if (traj.steps.empty()) throw ParameterError("planning needs a non-empty trajectory");
  for (const auto& step : traj.steps) {
    if (step.s >= v_hat.size() || step.s_next >= v_hat.size()) {
      throw ParameterError("trajectory state index exceeds the value table");
    }
  }
}

}  // namespace

bool Trajectory::has_planned_returns() const noexcept {
  if (planned_returns.empty()) return false;
  return std::all_of(planned_returns.begin(), planned_returns.end(),
                     [&](const auto& row) { return row.size() == steps.size(); });
}

void Trajectory::validate(std::size_t n_states, std::size_t n_actions) const {
  if (steps.empty()) throw ParameterError("trajectory " + std::to_string(episode_id) + " is empty");
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& step = steps[t];
    if (step.s >= n_states || step.s_next >= n_states || step.a >= n_actions) {
      throw ParameterError("trajectory " + std::to_string(episode_id) + ": index out of range at step " +
                           std::to_string(t));
    }
    if (t + 1 < steps.size() && step.s_next != steps[t + 1].s) {
      throw ParameterError("trajectory " + std::to_string(episode_id) + ": broken continuity at step " +
                           std::to_string(t));
    }
  }
  for (const auto& row : planned_returns) {
    if (row.size() != steps.size()) {
      throw ParameterError("trajectory " + std::to_string(episode_id) + ": planned returns have wrong length");
    }
  }
}

std::size_t OfflineDataset::transition_count() const noexcept {
  std::size_t total = 0;
  for (const auto& traj : trajectories) total += traj.length();
  return total;
}

std::size_t OfflineDataset::max_episode_length() const noexcept {
  std::size_t longest = 0;
  for (const auto& traj : trajectories) longest = std::max(longest, traj.length());
  return longest;
}

bool OfflineDataset::has_planned_returns() const noexcept {
  return !trajectories.empty() &&
         std::all_of(trajectories.begin(), trajectories.end(), [](const auto& t) { return t.has_planned_returns(); });
}

void OfflineDataset::validate() const {
  if (trajectories.empty()) throw ParameterError("dataset has no trajectories");
  if (n_states == 0 || n_actions == 0) throw ParameterError("dataset dimensions must be positive");
  for (const auto& traj : trajectories) traj.validate(n_states, n_actions);
}

void PlanningConfig::validate() const {
  if (n_max < 1) throw ParameterError("n_max must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in [0, 1)");
}

PlanningConfig full_horizon_planning(const OfflineDataset& dataset, double gamma) {
  return PlanningConfig{std::max<std::size_t>(1, dataset.max_episode_length()), gamma};
}

std::vector<double> plan_returns_recursive(const Trajectory& traj, const ValueTable& v_hat, double gamma) {
  check_trajectory_input(traj, v_hat);
  const std::size_t len = traj.length();
  std::vector<double> out(len);
  const auto& last = traj.steps.back();
  out[len - 1] = traj.done ? last.r : last.r + gamma * v_hat[last.s_next];
  for (std::size_t t = len - 1; t-- > 0;) {
    const auto& step = traj.steps[t];
    out[t] = step.r + gamma * std::max(out[t + 1], v_hat[step.s_next]);
  }
  return out;
}

std::vector<double> plan_returns_unrolled(const Trajectory& traj, const ValueTable& v_hat,
                                          const PlanningConfig& cfg) {
  cfg.validate();
  check_trajectory_input(traj, v_hat);
  const std::size_t len = traj.length();
  // Rollouts longer than the trajectory all equal the full tail, so the
  // table never needs more than len + 1 columns.
  const std::size_t width = std::min(cfg.n_max, len) + 1;

  // rollout[n] holds V_{t+1,n} while processing step t.
  const double beyond_end = traj.done ? 0.0 : v_hat[traj.steps.back().s_next];
  std::vector<double> rollout(width, beyond_end);
  std::vector<double> current(width);
  std::vector<double> out(len);
  for (std::size_t t = len; t-- > 0;) {
    const auto& step = traj.steps[t];
    current[0] = v_hat[step.s];
    double best = 0.0;
    for (std::size_t n = 1; n < width; ++n) {
      current[n] = step.r + cfg.gamma * rollout[n - 1];
      best = (n == 1) ? current[n] : std::max(best, current[n]);
    }
    out[t] = best;
    std::swap(rollout, current);
  }
  return out;
}

void update_memory_in_place(OfflineDataset& dataset, const CriticTables& critics, const PlanningConfig& cfg) {
  cfg.validate();
  for (const auto& critic : critics) {
    if (critic.size() != dataset.n_states) throw ParameterError("update_memory: critic dimension mismatch");
  }
  for (auto& traj : dataset.trajectories) {
    traj.planned_returns.resize(critics.size());
    for (std::size_t i = 0; i < critics.size(); ++i) {
      traj.planned_returns[i] = plan_returns_unrolled(traj, critics[i], cfg);
    }
  }
}

OfflineDataset update_memory(OfflineDataset dataset, const CriticTables& critics, const PlanningConfig& cfg) {
  update_memory_in_place(dataset, critics, cfg);
  return dataset;
}

VemResult vem_operator(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                       const OperatorConfig& op_cfg, const PlanningConfig& plan_cfg) {
  if (op_cfg.kind != OperatorKind::expectile_gradient) {
    throw ParameterError("vem_operator requires the expectile_gradient operator kind");
  }
  if (plan_cfg.n_max < 1) throw ParameterError("n_max must be >= 1");

  VemResult result{apply_expectile_gradient(v, mdp, mu, op_cfg), std::vector<std::size_t>(mdp.n_states, 1)};
  ValueTable rollout = result.values;
  for (std::size_t n = 2; n <= plan_cfg.n_max; ++n) {
    rollout = apply_expectation(rollout, mdp, mu);
    for (StateIndex s = 0; s < mdp.n_states; ++s) {
      if (rollout[s] > result.values[s]) {
        result.values[s] = rollout[s];
        result.n_star[s] = n;
      }
    }
  }
  return result;
}

OfflineDataset collect_dataset(const TabularMdp& mdp, const TabularPolicy& mu, const DatasetOptions& options) {
  mdp.validate();
  if (mu.n_states() != mdp.n_states || mu.n_actions() != mdp.n_actions) {
    throw ParameterError("collect_dataset: policy dimension mismatch");
  }
  if (options.episodes == 0 || options.episode_length == 0) {
    throw ParameterError("collect_dataset: episodes and episode_length must be positive");
  }
  std::vector<double> start(mdp.n_states, 0.0);
  double start_mass = 0.0;
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    if (!mdp.is_terminal(s)) start[s] = mdp.initial_dist[s];
    start_mass += start[s];
  }
  if (!(start_mass > 0.0)) throw ParameterError("collect_dataset: initial distribution covers only terminals");
  for (double& p : start) p /= start_mass;

  std::mt19937_64 rng(options.seed);
  OfflineDataset dataset;
  dataset.n_states = mdp.n_states;
  dataset.n_actions = mdp.n_actions;
  dataset.trajectories.reserve(options.episodes);
  for (std::size_t episode = 0; episode < options.episodes; ++episode) {
    Trajectory traj;
    traj.episode_id = episode;
    StateIndex s = sample_index(start, rng);
    for (std::size_t t = 0; t < options.episode_length; ++t) {
      const ActionIndex a = sample_index(mu.row(s), rng);
      const StateIndex s_next = mdp.next(s, a);
      traj.steps.push_back({s, a, mdp.reward_at(s, a), s_next});
      s = s_next;
      if (mdp.is_terminal(s)) {
        traj.done = true;
        break;
      }
    }
    dataset.trajectories.push_back(std::move(traj));
  }
  return dataset;
}

OfflineDataset concat_datasets(OfflineDataset base, const OfflineDataset& extra) {
  if (base.n_states != extra.n_states || base.n_actions != extra.n_actions) {
    throw ParameterError("concat_datasets: dimension mismatch");
  }
  std::uint64_t next_id = 0;
  for (const auto& traj : base.trajectories) next_id = std::max(next_id, traj.episode_id + 1);
  for (auto traj : extra.trajectories) {
    traj.episode_id = next_id++;
    base.trajectories.push_back(std::move(traj));
  }
  if (!extra.source.empty()) base.source = base.source.empty() ? extra.source : base.source + "; " + extra.source;
  return base;
}

}  // namespace vemlab
