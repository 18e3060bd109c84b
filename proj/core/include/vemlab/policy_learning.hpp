#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vemlab/mdp.hpp"
#include "vemlab/memory.hpp"

namespace vemlab {

enum class WeightingKind { leaky_relu, softmax };

std::string_view to_string(WeightingKind kind);
WeightingKind parse_weighting_kind(std::string_view name);

/// Advantage weighting f. leaky_relu: A if A > 0, else A / scale.
/// softmax: exp(A / scale) normalized over the whole record batch.
struct WeightingFn {
  WeightingKind kind = WeightingKind::leaky_relu;
  double scale = 1.0;

  void validate() const;
  friend bool operator==(const WeightingFn&, const WeightingFn&) = default;
};

struct AdvantageRecord {
  StateIndex s = 0;
  ActionIndex a = 0;
  double advantage = 0.0;
  /// Raw f(advantage). May be negative for leaky_relu; fit_policy floors it.
  double weight = 0.0;

  friend bool operator==(const AdvantageRecord&, const AdvantageRecord&) = default;
};

/// advantage = min_i R_t^(i) - mean_i V_i(s_t) for every stored step.
/// Throws StateError if the dataset has no planned returns.
std::vector<AdvantageRecord> compute_advantages(const OfflineDataset& dataset, const CriticTables& critics);

double leaky_relu_weight(double advantage, double scale);

std::vector<AdvantageRecord> apply_weighting(std::vector<AdvantageRecord> records, const WeightingFn& f);

/// Weighted maximum likelihood over tabular policies:
/// pi(a|s) proportional to the summed max(weight, 0) of (s, a) records;
/// states without positive weight fall back to uniform.
TabularPolicy fit_policy(std::span<const AdvantageRecord> records, std::size_t n_states, std::size_t n_actions);

/// J(pi) = sum_s rho0(s) V^pi(s).
double evaluate_policy(const TabularMdp& mdp, const TabularPolicy& pi, double tol = kSolverTolerance);

}  // namespace vemlab
