#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vemlab/mdp.hpp"
#include "vemlab/operators.hpp"

namespace vemlab {

/// The two value tables of a twin critic, indexed 0 and 1.
using CriticTables = std::array<ValueTable, 2>;

/// One stored episode. `planned_returns[i][t]` is the planned return of step t
/// against critic i; empty until update_memory has run.
struct Trajectory {
  std::uint64_t episode_id = 0;
  std::vector<TransitionSample> steps;
  /// True when the final step enters a terminal state. Truncated episodes
  /// bootstrap from the value of their last next-state instead.
  bool done = false;
  std::vector<std::vector<double>> planned_returns;

  std::size_t length() const noexcept { return steps.size(); }
  bool has_planned_returns() const noexcept;
  /// Non-empty, indices in range, and s_next of each step equals s of the next.
  void validate(std::size_t n_states, std::size_t n_actions) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct OfflineDataset {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<Trajectory> trajectories;
  /// Free-form provenance (behavior temperature, seed, ...), stored verbatim.
  std::string source;

  std::size_t transition_count() const noexcept;
  std::size_t max_episode_length() const noexcept;
  bool has_planned_returns() const noexcept;
  void validate() const;

  friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

struct PlanningConfig {
  /// Longest rollout considered by the planner; at least 1.
  std::size_t n_max = 1;
  double gamma = 0.99;

  void validate() const;
  friend bool operator==(const PlanningConfig&, const PlanningConfig&) = default;
};

/// n_max equal to the longest episode in the dataset, the default horizon.
PlanningConfig full_horizon_planning(const OfflineDataset& dataset, double gamma);

/// Reverse sweep R_T = r_T, R_t = r_t + gamma * max(R_{t+1}, V(s_{t+1})).
/// A truncated trajectory ends with R_T = r_T + gamma * V(s_{T+1}).
std::vector<double> plan_returns_recursive(const Trajectory& traj, const ValueTable& v_hat, double gamma);

/// R_t = max over 1 <= n <= n_max of the n-step rollout value
/// V_{t,n} = r_t + gamma * V_{t+1,n-1}, V_{t,0} = V(s_t). Past the end of a
/// terminated trajectory rollouts contribute 0; past the end of a truncated
/// one they bootstrap from V(s_{T+1}). Equals plan_returns_recursive whenever
/// n_max covers the remaining horizon.
std::vector<double> plan_returns_unrolled(const Trajectory& traj, const ValueTable& v_hat,
                                          const PlanningConfig& cfg);

/// Fills planned_returns of every trajectory, one row per critic.
void update_memory_in_place(OfflineDataset& dataset, const CriticTables& critics, const PlanningConfig& cfg);
OfflineDataset update_memory(OfflineDataset dataset, const CriticTables& critics, const PlanningConfig& cfg);

struct VemResult {
  ValueTable values;
  /// Maximizing rollout length per state, 1-based, smallest on ties.
  std::vector<std::size_t> n_star;
};

/// (T_vem V)(s) = max over 1 <= n <= n_max of ((T^mu)^{n-1} T_tau V)(s),
/// where T_tau is the gradient expectile operator and T^mu the Bellman
/// expectation operator.
VemResult vem_operator(const ValueTable& v, const TabularMdp& mdp, const TabularPolicy& mu,
                       const OperatorConfig& op_cfg, const PlanningConfig& plan_cfg);

struct DatasetOptions {
  std::size_t episodes = 100;
  std::size_t episode_length = 50;
  std::uint64_t seed = 0;
};

/// Rolls out `mu` from the MDP's initial distribution (restricted to
/// non-terminal states). Episodes stop early on entering a terminal state.
OfflineDataset collect_dataset(const TabularMdp& mdp, const TabularPolicy& mu, const DatasetOptions& options);

/// Appends `extra` to `base`, renumbering episode ids to stay unique.
OfflineDataset concat_datasets(OfflineDataset base, const OfflineDataset& extra);

}  // namespace vemlab
