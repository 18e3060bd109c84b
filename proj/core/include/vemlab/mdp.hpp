#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vemlab {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// Default convergence tolerance of the exact solvers.
inline constexpr double kSolverTolerance = 1e-10;

/// A real vector indexed by state.
class ValueTable {
 public:
  ValueTable() = default;
  explicit ValueTable(std::size_t n_states, double fill = 0.0) : values_(n_states, fill) {}
  explicit ValueTable(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](StateIndex s) { return values_[s]; }
  double operator[](StateIndex s) const { return values_[s]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_finite() const noexcept;

  friend bool operator==(const ValueTable&, const ValueTable&) = default;

 private:
  std::vector<double> values_;
};

double sup_norm(const ValueTable& v);
double sup_distance(const ValueTable& a, const ValueTable& b);
double mean_value(const ValueTable& v);

/// Deterministic finite MDP. Tables are row-major over (state, action).
///
/// Terminal states self-loop with zero reward, which lets finite episodes and
/// the infinite-horizon operators share one transition table.
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<StateIndex> next_state;
  std::vector<double> reward;
  double gamma = 0.9;
  std::vector<double> initial_dist;
  std::vector<bool> terminal_mask;
  /// Generator seed, kept for provenance; 0 for hand-built MDPs.
  std::uint64_t seed = 0;

  StateIndex next(StateIndex s, ActionIndex a) const { return next_state[s * n_actions + a]; }
  double reward_at(StateIndex s, ActionIndex a) const { return reward[s * n_actions + a]; }
  bool is_terminal(StateIndex s) const { return terminal_mask[s]; }

  /// Throws ParameterError if any structural invariant is violated.
  void validate() const;

  friend bool operator==(const TabularMdp&, const TabularMdp&) = default;
};

/// Stochastic action distribution per state, row-major over (state, action).
class TabularPolicy {
 public:
  TabularPolicy() = default;
  TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
  /// One-hot rows selecting `actions[s]`.
  static TabularPolicy deterministic(std::span<const ActionIndex> actions, std::size_t n_actions);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_actions() const noexcept { return n_actions_; }
  double prob(StateIndex s, ActionIndex a) const { return probs_[s * n_actions_ + a]; }
  std::span<const double> row(StateIndex s) const {
    return std::span<const double>(probs_).subspan(s * n_actions_, n_actions_);
  }
  const std::vector<double>& probs() const noexcept { return probs_; }

  /// Most probable action; smallest index on ties.
  ActionIndex argmax(StateIndex s) const;

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  void validate() const;

  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> probs_;
};

struct RandomMdpOptions {
  std::uint64_t seed = 0;
  std::size_t n_states = 10;
  std::size_t n_actions = 4;
  double reward_low = 0.0;
  double reward_high = 1.0;
  double gamma = 0.9;
  /// The last `n_terminal` states become absorbing terminals.
  std::size_t n_terminal = 0;
};

/// Next states uniform over all states, rewards uniform in
/// [reward_low, reward_high), uniform initial distribution.
TabularMdp generate_random_mdp(const RandomMdpOptions& options);
TabularMdp generate_random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions,
                               double reward_low = 0.0, double reward_high = 1.0);

/// Sparse-reward chain: action 0 steps left, action 1 steps right (further
/// actions alternate between the two). Entering the last state pays 1 and
/// ends the episode; every other transition pays 0. Episodes start in state 0.
TabularMdp make_sparse_chain(std::size_t n_states, double gamma, std::size_t n_actions = 2);

/// Q(s, a) = r(s, a) + gamma * V(next(s, a)), row-major.
std::vector<double> q_values(const TabularMdp& mdp, const ValueTable& v);

/// V* by value iteration; on return ||T*V - V||_inf <= tol.
ValueTable solve_optimal_values(const TabularMdp& mdp, double tol = kSolverTolerance);

/// V^mu by iterating the Bellman expectation operator under `mu`.
ValueTable solve_behavior_values(const TabularMdp& mdp, const TabularPolicy& mu,
                                 double tol = kSolverTolerance);

/// mu(a|s) proportional to exp(Q*(s, a) / temperature).
TabularPolicy softmax_behavior_policy(const TabularMdp& mdp, double temperature,
                                      double tol = kSolverTolerance);

/// Greedy policy with respect to Q computed from `v`; smallest action on ties.
TabularPolicy greedy_policy(const TabularMdp& mdp, const ValueTable& v);

}  // namespace vemlab
