#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "vemlab/mdp.hpp"
#include "vemlab/memory.hpp"
#include "vemlab/operators.hpp"
#include "vemlab/policy_learning.hpp"

namespace vemlab {

/// How the twin critics are regressed toward their planned returns.
enum class CriticLoss {
  squared,    ///< least squares toward R_t, as in the training loop's critic line.
  expectile,  ///< asymmetric squared loss with (tau, expectile_step).
};

std::string_view to_string(CriticLoss loss);
CriticLoss parse_critic_loss(std::string_view name);

struct TrainConfig {
  std::size_t total_steps = 1000;
  std::size_t batch_size = 128;
  double kappa = 0.005;  ///< target update rate
  std::size_t memory_update_period = 100;
  /// alpha of the gradient expectile step (evl_step, expectile critic loss).
  double expectile_step = 0.5;
  /// Tabular regression rate; 1 solves the per-state least-squares problem exactly.
  double learning_rate = 1.0;
  double tau = 0.7;
  std::size_t n_max = 1;
  std::uint64_t seed = 0;
  /// Critic tables start at uniform noise in [0, init_noise).
  double init_noise = 1e-3;
  /// Policy evaluation cadence for the metrics log; the last step is always logged.
  std::size_t eval_period = 1;
  CriticLoss critic_loss = CriticLoss::squared;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Online critics and their lagged targets.
struct CriticPair {
  CriticTables online;
  CriticTables target;

  /// Online tables drawn from U[0, noise_scale) per entry; targets copy them.
  static CriticPair initialize(std::size_t n_states, std::uint64_t seed, double noise_scale);

  friend bool operator==(const CriticPair&, const CriticPair&) = default;
};

struct WarningCounter {
  std::size_t empty_batches = 0;
};

/// One expectile V-learning step on a batch. For each critic i and sample the
/// target is V'(s) + 2 alpha [tau [delta]+ + (1 - tau) [delta]-] with
/// delta = r + gamma V'(s') - V'(s) on the target table; each visited online
/// entry moves by learning_rate toward the mean target of its samples.
CriticPair evl_step(const CriticPair& critics, std::span<const TransitionSample> batch, double gamma,
                    const TrainConfig& cfg, WarningCounter* warnings = nullptr);

/// target <- kappa * online + (1 - kappa) * target.
CriticPair polyak_update(const CriticPair& critics, double kappa);

struct MetricsRecord {
  std::size_t step = 0;
  double critic_loss_1 = 0.0;
  double critic_loss_2 = 0.0;
  double policy_return = 0.0;  ///< J(pi)
  double mean_value = 0.0;     ///< mean critic value over visited states
  double value_error = 0.0;    ///< mean_value minus the mean of V* over the same states
  double max_value = 0.0;      ///< running max of any online or target critic entry

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct TrainResult {
  TabularPolicy policy;
  CriticPair critics;
  std::vector<MetricsRecord> metrics;
  OfflineDataset memory;
  /// Largest critic entry observed anywhere during training.
  double max_critic_value = 0.0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Tabular value-based episodic memory training loop. `sink`, when set, sees
/// each metrics record as soon as it is logged.
TrainResult train_vem(const TabularMdp& mdp, OfflineDataset dataset, const TrainConfig& cfg, const WeightingFn& f,
                      const MetricsSink& sink = {});

/// First logged step whose J reaches `fraction` of the final J; the final
/// step if none earlier does.
std::size_t steps_to_fraction_of_final(std::span<const MetricsRecord> metrics, double fraction);

}  // namespace vemlab
