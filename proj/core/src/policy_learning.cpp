#include "vemlab/policy_learning.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vemlab/error.hpp"

namespace vemlab {

std::string_view to_string(WeightingKind kind) {
  return kind == WeightingKind::leaky_relu ? "leaky_relu" : "softmax";
}

WeightingKind parse_weighting_kind(std::string_view name) {
  if (name == "leaky_relu") return WeightingKind::leaky_relu;
  if (name == "softmax") return WeightingKind::softmax;
  throw ParameterError("unknown weighting kind '" + std::string(name) + "'");
}

void WeightingFn::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("weighting scale must be positive");
}

std::vector<AdvantageRecord> compute_advantages(const OfflineDataset& dataset, const CriticTables& critics) {
  for (const auto& critic : critics) {
    if (critic.size() != dataset.n_states) throw ParameterError("compute_advantages: critic dimension mismatch");
  }
  std::vector<AdvantageRecord> records;
  records.reserve(dataset.transition_count());
  for (const auto& traj : dataset.trajectories) {
    if (!traj.has_planned_returns() || traj.planned_returns.size() != critics.size()) {
      throw StateError("trajectory " + std::to_string(traj.episode_id) +
                       " has no planned returns; run update_memory first");
    }
    for (std::size_t t = 0; t < traj.length(); ++t) {
      const auto& step = traj.steps[t];
      double lowest_return = traj.planned_returns[0][t];
      double mean_value = 0.0;
      for (std::size_t i = 0; i < critics.size(); ++i) {
        lowest_return = std::min(lowest_return, traj.planned_returns[i][t]);
        mean_value += critics[i][step.s];
      }
      mean_value /= static_cast<double>(critics.size());
      records.push_back({step.s, step.a, lowest_return - mean_value, 0.0});
    }
  }
  return records;
}

double leaky_relu_weight(double advantage, double scale) {
  return advantage > 0.0 ? advantage : advantage / scale;
}

std::vector<AdvantageRecord> apply_weighting(std::vector<AdvantageRecord> records, const WeightingFn& f) {
  f.validate();
  if (f.kind == WeightingKind::leaky_relu) {
    for (auto& rec : records) rec.weight = leaky_relu_weight(rec.advantage, f.scale);
    return records;
  }
  if (records.empty()) throw ParameterError("softmax weighting needs a non-empty batch");
  double top = records.front().advantage;
  for (const auto& rec : records) top = std::max(top, rec.advantage);
  double total = 0.0;
  for (auto& rec : records) {
    rec.weight = std::exp((rec.advantage - top) / f.scale);
    total += rec.weight;
  }
  for (auto& rec : records) rec.weight /= total;
  return records;
}

TabularPolicy fit_policy(std::span<const AdvantageRecord> records, std::size_t n_states, std::size_t n_actions) {
  if (records.empty()) throw ParameterError("fit_policy needs at least one record");
  if (n_states == 0 || n_actions == 0) throw ParameterError("fit_policy: dimensions must be positive");
  std::vector<double> mass(n_states * n_actions, 0.0);
  for (const auto& rec : records) {
    if (rec.s >= n_states || rec.a >= n_actions) throw ParameterError("fit_policy: record index out of range");
    if (!std::isfinite(rec.weight)) throw ParameterError("fit_policy: non-finite weight");
    mass[rec.s * n_actions + rec.a] += std::max(rec.weight, 0.0);
  }
  for (StateIndex s = 0; s < n_states; ++s) {
    const auto first = mass.begin() + static_cast<std::ptrdiff_t>(s * n_actions);
    const auto last = first + static_cast<std::ptrdiff_t>(n_actions);
    double total = 0.0;
    for (auto it = first; it != last; ++it) total += *it;
    if (total > 0.0) {
      for (auto it = first; it != last; ++it) *it /= total;
    } else {
      std::fill(first, last, 1.0 / static_cast<double>(n_actions));
    }
  }
  return TabularPolicy(n_states, n_actions, std::move(mass));
}

double evaluate_policy(const TabularMdp& mdp, const TabularPolicy& pi, double tol) {
  const ValueTable v = solve_behavior_values(mdp, pi, tol);
  double j = 0.0;
  for (StateIndex s = 0; s < mdp.n_states; ++s) j += mdp.initial_dist[s] * v[s];
  return j;
}

}  // namespace vemlab
