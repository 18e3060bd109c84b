#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vemlab/diagnostics.hpp"
#include "vemlab/mdp.hpp"
#include "vemlab/memory.hpp"
#include "vemlab/operators.hpp"
#include "vemlab/policy_learning.hpp"
#include "vemlab/training.hpp"

namespace vemlab {

struct MdpSection {
  /// Load the MDP from this file instead of generating one.
  std::string file;
  std::string kind = "random";  ///< "random" or "chain"
  std::size_t n_states = 20;
  std::size_t n_actions = 4;
  double reward_low = 0.0;
  double reward_high = 1.0;
  double gamma = 0.9;
  std::size_t n_terminal = 0;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const MdpSection&, const MdpSection&) = default;
};

struct DatasetSection {
  std::string file;
  /// Behavior policy is softmax(Q* / temperature).
  double temperature = 1.0;
  /// Share of episodes collected with the uniform policy instead.
  double random_fraction = 0.0;
  std::size_t episodes = 100;
  std::size_t episode_length = 50;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const DatasetSection&, const DatasetSection&) = default;
};

struct PlanningSection {
  std::size_t n_max = 1;
  /// Overrides n_max with the longest episode in the dataset.
  bool full_horizon = false;

  friend bool operator==(const PlanningSection&, const PlanningSection&) = default;
};

struct EvlSection {
  double tol = 1e-10;
  std::size_t max_iters = 1'000'000;
  std::size_t log_period = 1;

  friend bool operator==(const EvlSection&, const EvlSection&) = default;
};

struct DiagnoseSection {
  std::string protocol = "all";  ///< figure1, figure2, figure3 or all
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  std::vector<double> taus{0.6, 0.7, 0.8, 0.9};
  std::vector<std::size_t> n_maxes{1, 2, 3, 4};
  std::vector<double> temperatures{0.1, 0.3, 1.0, 3.0};
  std::vector<double> noisy_taus{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  double noise_sigma = 0.5;
  ProtocolSettings settings;

  friend bool operator==(const DiagnoseSection&, const DiagnoseSection&) = default;
};

/// One experiment per file. Seeds left unset derive from the root seed.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  MdpSection mdp;
  DatasetSection dataset;
  OperatorConfig op;
  PlanningSection planning;
  /// train.seed is not used; see train_seed.
  TrainConfig train;
  std::optional<std::uint64_t> train_seed;
  WeightingFn weighting;
  EvlSection evl;
  DiagnoseSection diagnose;
  std::string output_dir = "runs/default";

  void validate() const;

  std::uint64_t resolved_mdp_seed() const;
  std::uint64_t resolved_dataset_seed() const;
  TrainConfig resolved_train() const;
  /// Copy with every optional seed filled in.
  ExperimentConfig resolved() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses a JSON config. Each override has the form "dotted.path=value",
/// where value is JSON (falls back to a plain string). Unknown keys throw
/// FormatError; bound violations throw ParameterError.
ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});
std::string serialize_config(const ExperimentConfig& cfg);
/// Single-line form for CSV comment headers.
std::string serialize_config_compact(const ExperimentConfig& cfg);

TabularMdp build_mdp(const ExperimentConfig& cfg);
TabularPolicy build_behavior_policy(const ExperimentConfig& cfg, const TabularMdp& mdp);
/// Loads dataset.file, or collects episodes from the behavior policy mixed
/// with uniform-policy episodes per random_fraction.
OfflineDataset build_dataset(const ExperimentConfig& cfg, const TabularMdp& mdp);
PlanningConfig build_planning(const ExperimentConfig& cfg, const OfflineDataset& dataset, double gamma);

}  // namespace vemlab
