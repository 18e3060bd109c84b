#include "vemlab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "vemlab/error.hpp"

namespace vemlab {

namespace {

constexpr double kProbabilitySlack = 1e-12;
constexpr std::size_t kMaxSolverSweeps = 50'000'000;

void check_row_distribution(std::span<const double> row, const std::string& what) {
  double total = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) throw ParameterError(what + ": negative or non-finite probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kProbabilitySlack) {
    throw ParameterError(what + ": probabilities sum to " + std::to_string(total));
  }
}

// Iterates `backup` (one synchronous sweep) until the residual drops below tol.
template <typename Backup>
ValueTable iterate_to_tolerance(std::size_t n_states, double tol, Backup&& backup) {
  if (!(tol > 0.0)) throw ParameterError("solver tolerance must be positive");
  ValueTable v(n_states, 0.0);
  ValueTable next(n_states, 0.0);
  for (std::size_t sweep = 0; sweep < kMaxSolverSweeps; ++sweep) {
    double residual = 0.0;
    for (StateIndex s = 0; s < n_states; ++s) {
      next[s] = backup(v, s);
      residual = std::max(residual, std::abs(next[s] - v[s]));
    }
    std::swap(v, next);
    if (residual <= tol) break;
  }
  return v;
}

}  // namespace

bool ValueTable::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

double sup_norm(const ValueTable& v) {
  double out = 0.0;
  for (double x : v) out = std::max(out, std::abs(x));
  return out;
}

double sup_distance(const ValueTable& a, const ValueTable& b) {
  if (a.size() != b.size()) throw ParameterError("sup_distance: dimension mismatch");
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

double mean_value(const ValueTable& v) {
  if (v.size() == 0) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void TabularMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw ParameterError("MDP needs at least one state and one action");
  const std::size_t pairs = n_states * n_actions;
  if (next_state.size() != pairs || reward.size() != pairs) {
    throw ParameterError("MDP transition/reward tables must have n_states * n_actions entries");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in [0, 1)");
  if (initial_dist.size() != n_states || terminal_mask.size() != n_states) {
    throw ParameterError("initial_dist and terminal_mask must have n_states entries");
  }
  for (StateIndex s = 0; s < n_states; ++s) {
    for (ActionIndex a = 0; a < n_actions; ++a) {
      if (next(s, a) >= n_states) throw ParameterError("next_state entry out of range");
      if (!std::isfinite(reward_at(s, a))) throw ParameterError("reward entries must be finite");
      if (terminal_mask[s] && (next(s, a) != s || reward_at(s, a) != 0.0)) {
        throw ParameterError("terminal state " + std::to_string(s) + " must self-loop with zero reward");
      }
    }
  }
  check_row_distribution(initial_dist, "initial_dist");
}

TabularPolicy::TabularPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  validate();
}

void TabularPolicy::validate() const {
  if (n_states_ == 0 || n_actions_ == 0) throw ParameterError("policy needs states and actions");
  if (probs_.size() != n_states_ * n_actions_) throw ParameterError("policy table has wrong size");
  for (StateIndex s = 0; s < n_states_; ++s) {
    check_row_distribution(row(s), "policy row " + std::to_string(s));
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  if (n_actions == 0) throw ParameterError("policy needs actions");
  return TabularPolicy(n_states, n_actions,
                       std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions)));
}

TabularPolicy TabularPolicy::deterministic(std::span<const ActionIndex> actions, std::size_t n_actions) {
  std::vector<double> probs(actions.size() * n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw ParameterError("deterministic policy: action out of range");
    probs[s * n_actions + actions[s]] = 1.0;
  }
  return TabularPolicy(actions.size(), n_actions, std::move(probs));
}

ActionIndex TabularPolicy::argmax(StateIndex s) const {
  const auto r = row(s);
  return static_cast<ActionIndex>(std::max_element(r.begin(), r.end()) - r.begin());
}

TabularMdp generate_random_mdp(const RandomMdpOptions& options) {
  if (options.n_states < 2) throw ParameterError("generate_random_mdp: n_states must be >= 2");
  if (options.n_actions < 2) throw ParameterError("generate_random_mdp: n_actions must be >= 2");
  if (!(options.reward_low < options.reward_high)) {
    throw ParameterError("generate_random_mdp: reward_low must be < reward_high");
  }
  if (options.n_terminal >= options.n_states) {
    throw ParameterError("generate_random_mdp: at least one state must be non-terminal");
  }

  TabularMdp mdp;
  mdp.n_states = options.n_states;
  mdp.n_actions = options.n_actions;
  mdp.gamma = options.gamma;
  mdp.seed = options.seed;
  const std::size_t pairs = options.n_states * options.n_actions;

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<StateIndex> pick_state(0, options.n_states - 1);
  std::uniform_real_distribution<double> pick_reward(options.reward_low, options.reward_high);
  mdp.next_state.resize(pairs);
  mdp.reward.resize(pairs);
  for (auto& s : mdp.next_state) s = pick_state(rng);
  for (auto& r : mdp.reward) r = pick_reward(rng);

  mdp.initial_dist.assign(options.n_states, 1.0 / static_cast<double>(options.n_states));
  mdp.terminal_mask.assign(options.n_states, false);
  for (StateIndex s = options.n_states - options.n_terminal; s < options.n_states; ++s) {
    mdp.terminal_mask[s] = true;
    for (ActionIndex a = 0; a < options.n_actions; ++a) {
      mdp.next_state[s * options.n_actions + a] = s;
      mdp.reward[s * options.n_actions + a] = 0.0;
    }
  }
  mdp.validate();
  return mdp;
}

TabularMdp generate_random_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions,
                               double reward_low, double reward_high) {
  RandomMdpOptions options;
  options.seed = seed;
  options.n_states = n_states;
  options.n_actions = n_actions;
  options.reward_low = reward_low;
  options.reward_high = reward_high;
  return generate_random_mdp(options);
}

TabularMdp make_sparse_chain(std::size_t n_states, double gamma, std::size_t n_actions) {
  if (n_states < 2) throw ParameterError("make_sparse_chain: n_states must be >= 2");
  if (n_actions < 2) throw ParameterError("make_sparse_chain: n_actions must be >= 2");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.next_state.resize(n_states * n_actions);
  mdp.reward.assign(n_states * n_actions, 0.0);
  const StateIndex goal = n_states - 1;
  for (StateIndex s = 0; s < n_states; ++s) {
    for (ActionIndex a = 0; a < n_actions; ++a) {
      StateIndex to = s;
      if (s != goal) to = (a % 2 == 1) ? s + 1 : (s == 0 ? 0 : s - 1);
      mdp.next_state[s * n_actions + a] = to;
      if (s != goal && to == goal) mdp.reward[s * n_actions + a] = 1.0;
    }
  }
  mdp.initial_dist.assign(n_states, 0.0);
  mdp.initial_dist[0] = 1.0;
  mdp.terminal_mask.assign(n_states, false);
  mdp.terminal_mask[goal] = true;
  mdp.validate();
  return mdp;
}

std::vector<double> q_values(const TabularMdp& mdp, const ValueTable& v) {
  if (v.size() != mdp.n_states) throw ParameterError("q_values: value table dimension mismatch");
  std::vector<double> q(mdp.n_states * mdp.n_actions);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      q[s * mdp.n_actions + a] = mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)];
    }
  }
  return q;
}

ValueTable solve_optimal_values(const TabularMdp& mdp, double tol) {
  mdp.validate();
  return iterate_to_tolerance(mdp.n_states, tol, [&](const ValueTable& v, StateIndex s) {
    double best = mdp.reward_at(s, 0) + mdp.gamma * v[mdp.next(s, 0)];
    for (ActionIndex a = 1; a < mdp.n_actions; ++a) {
      best = std::max(best, mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)]);
    }
    return best;
  });
}

ValueTable solve_behavior_values(const TabularMdp& mdp, const TabularPolicy& mu, double tol) {
  mdp.validate();
  if (mu.n_states() != mdp.n_states || mu.n_actions() != mdp.n_actions) {
    throw ParameterError("solve_behavior_values: policy dimension mismatch");
  }
  return iterate_to_tolerance(mdp.n_states, tol, [&](const ValueTable& v, StateIndex s) {
    double out = 0.0;
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      out += mu.prob(s, a) * (mdp.reward_at(s, a) + mdp.gamma * v[mdp.next(s, a)]);
    }
    return out;
  });
}

TabularPolicy softmax_behavior_policy(const TabularMdp& mdp, double temperature, double tol) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("softmax_behavior_policy: temperature must be positive");
  }
  const auto q = q_values(mdp, solve_optimal_values(mdp, tol));
  std::vector<double> probs(q.size());
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    const auto first = q.begin() + static_cast<std::ptrdiff_t>(s * mdp.n_actions);
    const double top = *std::max_element(first, first + static_cast<std::ptrdiff_t>(mdp.n_actions));
    double total = 0.0;
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) {
      const double w = std::exp((q[s * mdp.n_actions + a] - top) / temperature);
      probs[s * mdp.n_actions + a] = w;
      total += w;
    }
    for (ActionIndex a = 0; a < mdp.n_actions; ++a) probs[s * mdp.n_actions + a] /= total;
  }
  return TabularPolicy(mdp.n_states, mdp.n_actions, std::move(probs));
}

TabularPolicy greedy_policy(const TabularMdp& mdp, const ValueTable& v) {
  const auto q = q_values(mdp, v);
  std::vector<ActionIndex> actions(mdp.n_states);
  for (StateIndex s = 0; s < mdp.n_states; ++s) {
    ActionIndex best = 0;
    for (ActionIndex a = 1; a < mdp.n_actions; ++a) {
      if (q[s * mdp.n_actions + a] > q[s * mdp.n_actions + best]) best = a;
    }
    actions[s] = best;
  }
  return TabularPolicy::deterministic(actions, mdp.n_actions);
}

}  // namespace vemlab
