#include "vemlab/config.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "vemlab/error.hpp"
#include "vemlab/random.hpp"
#include "vemlab/serialization.hpp"

namespace vemlab {

namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw FormatError("config: '" + label() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    convert(*it, out, where(key));
  }

  Reader sub(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return Reader(it == obj_.end() ? empty() : *it, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw FormatError("config: unknown key '" + where(key.c_str()) + "'");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  static void convert(const json& v, double& out, const std::string& at) {
    if (!v.is_number()) throw FormatError("config: '" + at + "' must be a number");
    out = v.get<double>();
  }
  static void convert(const json& v, std::uint64_t& out, const std::string& at) {
    if (!v.is_number_unsigned()) throw FormatError("config: '" + at + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void convert(const json& v, bool& out, const std::string& at) {
    if (!v.is_boolean()) throw FormatError("config: '" + at + "' must be true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, std::string& out, const std::string& at) {
    if (!v.is_string()) throw FormatError("config: '" + at + "' must be a string");
    out = v.get<std::string>();
  }
  static void convert(const json& v, std::optional<std::uint64_t>& out, const std::string& at) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    std::uint64_t x = 0;
    convert(v, x, at);
    out = x;
  }
  template <typename T>
  static void convert(const json& v, std::vector<T>& out, const std::string& at) {
    if (!v.is_array()) throw FormatError("config: '" + at + "' must be an array");
    out.clear();
    for (const auto& x : v) {
      T item{};
      convert(x, item, at);
      out.push_back(item);
    }
  }
  static void convert(const json& v, OperatorKind& out, const std::string& at) {
    std::string name;
    convert(v, name, at);
    out = parse_operator_kind(name);
  }
  static void convert(const json& v, WeightingKind& out, const std::string& at) {
    std::string name;
    convert(v, name, at);
    out = parse_weighting_kind(name);
  }
  static void convert(const json& v, CriticLoss& out, const std::string& at) {
    std::string name;
    convert(v, name, at);
    out = parse_critic_loss(name);
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json optional_seed(const std::optional<std::uint64_t>& seed) { return seed ? json(*seed) : json(nullptr); }

json to_json(const ExperimentConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["mdp"] = {{"file", c.mdp.file},
                {"kind", c.mdp.kind},
                {"n_states", c.mdp.n_states},
                {"n_actions", c.mdp.n_actions},
                {"reward_low", c.mdp.reward_low},
                {"reward_high", c.mdp.reward_high},
                {"gamma", c.mdp.gamma},
                {"n_terminal", c.mdp.n_terminal},
                {"seed", optional_seed(c.mdp.seed)}};
  doc["dataset"] = {{"file", c.dataset.file},
                    {"temperature", c.dataset.temperature},
                    {"random_fraction", c.dataset.random_fraction},
                    {"episodes", c.dataset.episodes},
                    {"episode_length", c.dataset.episode_length},
                    {"seed", optional_seed(c.dataset.seed)}};
  doc["operator"] = {{"kind", std::string(to_string(c.op.kind))},
                     {"tau", c.op.tau},
                     {"alpha", c.op.alpha},
                     {"noise_sigma", c.op.noise_sigma}};
  doc["planning"] = {{"n_max", c.planning.n_max}, {"full_horizon", c.planning.full_horizon}};
  doc["train"] = {{"total_steps", c.train.total_steps},
                  {"batch_size", c.train.batch_size},
                  {"kappa", c.train.kappa},
                  {"memory_update_period", c.train.memory_update_period},
                  {"expectile_step", c.train.expectile_step},
                  {"learning_rate", c.train.learning_rate},
                  {"tau", c.train.tau},
                  {"init_noise", c.train.init_noise},
                  {"eval_period", c.train.eval_period},
                  {"critic_loss", std::string(to_string(c.train.critic_loss))},
                  {"seed", optional_seed(c.train_seed)}};
  doc["weighting"] = {{"kind", std::string(to_string(c.weighting.kind))}, {"scale", c.weighting.scale}};
  doc["evl"] = {{"tol", c.evl.tol}, {"max_iters", c.evl.max_iters}, {"log_period", c.evl.log_period}};
  const auto& d = c.diagnose;
  const auto& p = d.settings;
  doc["diagnose"] = {{"protocol", d.protocol},
                     {"seeds", d.seeds},
                     {"taus", d.taus},
                     {"n_maxes", d.n_maxes},
                     {"temperatures", d.temperatures},
                     {"noisy_taus", d.noisy_taus},
                     {"noise_sigma", d.noise_sigma},
                     {"n_states", p.n_states},
                     {"n_actions", p.n_actions},
                     {"gamma", p.gamma},
                     {"reward_low", p.reward_low},
                     {"reward_high", p.reward_high},
                     {"temperature", p.temperature},
                     {"n_max", p.n_max},
                     {"n_pairs", p.n_pairs},
                     {"value_scale", p.value_scale},
                     {"convergence_reduction", p.convergence_reduction},
                     {"samples_per_state", p.samples_per_state},
                     {"variance_draws", p.variance_draws},
                     {"fixed_point_tol", p.fixed_point_tol},
                     {"max_iters", p.max_iters},
                     {"noise_iters", p.noise_iters},
                     {"noise_step_tol", p.noise_step_tol},
                     {"jobs", p.jobs}};
  doc["output_dir"] = c.output_dir;
  return doc;
}

ExperimentConfig from_json(const json& doc) {
  ExperimentConfig c;
  Reader root(doc, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  {
    Reader r = root.sub("mdp");
    r.get("file", c.mdp.file);
    r.get("kind", c.mdp.kind);
    r.get("n_states", c.mdp.n_states);
    r.get("n_actions", c.mdp.n_actions);
    r.get("reward_low", c.mdp.reward_low);
    r.get("reward_high", c.mdp.reward_high);
    r.get("gamma", c.mdp.gamma);
    r.get("n_terminal", c.mdp.n_terminal);
    r.get("seed", c.mdp.seed);
    r.finish();
  }
  {
    Reader r = root.sub("dataset");
    r.get("file", c.dataset.file);
    r.get("temperature", c.dataset.temperature);
    r.get("random_fraction", c.dataset.random_fraction);
    r.get("episodes", c.dataset.episodes);
    r.get("episode_length", c.dataset.episode_length);
    r.get("seed", c.dataset.seed);
    r.finish();
  }
  {
    Reader r = root.sub("operator");
    r.get("kind", c.op.kind);
    r.get("tau", c.op.tau);
    r.get("alpha", c.op.alpha);
    r.get("noise_sigma", c.op.noise_sigma);
    r.finish();
  }
  {
    Reader r = root.sub("planning");
    r.get("n_max", c.planning.n_max);
    r.get("full_horizon", c.planning.full_horizon);
    r.finish();
  }
  {
    Reader r = root.sub("train");
    r.get("total_steps", c.train.total_steps);
    r.get("batch_size", c.train.batch_size);
    r.get("kappa", c.train.kappa);
    r.get("memory_update_period", c.train.memory_update_period);
    r.get("expectile_step", c.train.expectile_step);
    r.get("learning_rate", c.train.learning_rate);
    r.get("tau", c.train.tau);
    r.get("init_noise", c.train.init_noise);
    r.get("eval_period", c.train.eval_period);
    r.get("critic_loss", c.train.critic_loss);
    r.get("seed", c.train_seed);
    r.finish();
  }
  {
    Reader r = root.sub("weighting");
    r.get("kind", c.weighting.kind);
    r.get("scale", c.weighting.scale);
    r.finish();
  }
  {
    Reader r = root.sub("evl");
    r.get("tol", c.evl.tol);
    r.get("max_iters", c.evl.max_iters);
    r.get("log_period", c.evl.log_period);
    r.finish();
  }
  {
    Reader r = root.sub("diagnose");
    auto& d = c.diagnose;
    auto& p = d.settings;
    r.get("protocol", d.protocol);
    r.get("seeds", d.seeds);
    r.get("taus", d.taus);
    r.get("n_maxes", d.n_maxes);
    r.get("temperatures", d.temperatures);
    r.get("noisy_taus", d.noisy_taus);
    r.get("noise_sigma", d.noise_sigma);
    r.get("n_states", p.n_states);
    r.get("n_actions", p.n_actions);
    r.get("gamma", p.gamma);
    r.get("reward_low", p.reward_low);
    r.get("reward_high", p.reward_high);
    r.get("temperature", p.temperature);
    r.get("n_max", p.n_max);
    r.get("n_pairs", p.n_pairs);
    r.get("value_scale", p.value_scale);
    r.get("convergence_reduction", p.convergence_reduction);
    r.get("samples_per_state", p.samples_per_state);
    r.get("variance_draws", p.variance_draws);
    r.get("fixed_point_tol", p.fixed_point_tol);
    r.get("max_iters", p.max_iters);
    r.get("noise_iters", p.noise_iters);
    r.get("noise_step_tol", p.noise_step_tol);
    r.get("jobs", p.jobs);
    r.finish();
  }
  root.finish();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw FormatError("override '" + assignment + "' must look like path.to.key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw FormatError("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) throw FormatError("override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError("config: " + message);
}

void require_file(const std::string& file, const char* key) {
  if (!file.empty()) require(std::filesystem::exists(file), std::string(key) + " '" + file + "' does not exist");
}

}  // namespace

void ExperimentConfig::validate() const {
  require(mdp.kind == "random" || mdp.kind == "chain", "mdp.kind must be 'random' or 'chain'");
  require(mdp.n_states >= (mdp.kind == "chain" ? 2u : 1u), "mdp.n_states too small");
  require(mdp.n_actions >= 1, "mdp.n_actions must be positive");
  require(mdp.gamma >= 0.0 && mdp.gamma < 1.0, "mdp.gamma must lie in [0, 1)");
  require(mdp.reward_low <= mdp.reward_high, "mdp.reward_low must not exceed mdp.reward_high");
  require(mdp.n_terminal < mdp.n_states, "mdp.n_terminal must leave a non-terminal state");
  require_file(mdp.file, "mdp.file");

  require(dataset.temperature > 0.0, "dataset.temperature must be positive");
  require(dataset.random_fraction >= 0.0 && dataset.random_fraction <= 1.0,
          "dataset.random_fraction must lie in [0, 1]");
  require(dataset.episodes >= 1 && dataset.episode_length >= 1, "dataset.episodes and episode_length must be positive");
  require_file(dataset.file, "dataset.file");

  op.validate();
  require(planning.n_max >= 1, "planning.n_max must be positive");
  resolved_train().validate();
  weighting.validate();

  require(evl.tol > 0.0, "evl.tol must be positive");
  require(evl.max_iters >= 1 && evl.log_period >= 1, "evl.max_iters and evl.log_period must be positive");

  const auto& d = diagnose;
  require(d.protocol == "figure1" || d.protocol == "figure2" || d.protocol == "figure3" || d.protocol == "all",
          "diagnose.protocol must be figure1, figure2, figure3 or all");
  require(!d.seeds.empty(), "diagnose.seeds must not be empty");
  for (double tau : d.taus) vem_operator_config(tau).validate();
  for (double tau : d.noisy_taus) vem_operator_config(tau).validate();
  for (std::size_t n : d.n_maxes) require(n >= 1, "diagnose.n_maxes entries must be positive");
  for (double t : d.temperatures) require(t > 0.0, "diagnose.temperatures entries must be positive");
  require(d.noise_sigma >= 0.0, "diagnose.noise_sigma must be >= 0");
  d.settings.validate();

  require(!output_dir.empty(), "output_dir must not be empty");
}

std::uint64_t ExperimentConfig::resolved_mdp_seed() const {
  return mdp.seed.value_or(derive_seed(seed, streams::kMdp));
}

std::uint64_t ExperimentConfig::resolved_dataset_seed() const {
  return dataset.seed.value_or(derive_seed(seed, streams::kDataset));
}

TrainConfig ExperimentConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = train_seed.value_or(seed);
  t.n_max = planning.n_max;
  return t;
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig out = *this;
  out.mdp.seed = resolved_mdp_seed();
  out.dataset.seed = resolved_dataset_seed();
  out.train_seed = resolved_train().seed;
  return out;
}

ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("config: top level must be an object");
  for (const auto& assignment : overrides) apply_override(doc, assignment);
  ExperimentConfig cfg = from_json(doc);
  cfg.train.n_max = cfg.planning.n_max;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  return parse_config(read_text_file(path), overrides);
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string serialize_config_compact(const ExperimentConfig& cfg) { return to_json(cfg).dump(); }

TabularMdp build_mdp(const ExperimentConfig& cfg) {
  if (!cfg.mdp.file.empty()) return load_mdp(cfg.mdp.file);
  if (cfg.mdp.kind == "chain") {
    TabularMdp chain = make_sparse_chain(cfg.mdp.n_states, cfg.mdp.gamma, cfg.mdp.n_actions);
    chain.seed = cfg.resolved_mdp_seed();
    return chain;
  }
  RandomMdpOptions options;
  options.seed = cfg.resolved_mdp_seed();
  options.n_states = cfg.mdp.n_states;
  options.n_actions = cfg.mdp.n_actions;
  options.reward_low = cfg.mdp.reward_low;
  options.reward_high = cfg.mdp.reward_high;
  options.gamma = cfg.mdp.gamma;
  options.n_terminal = cfg.mdp.n_terminal;
  return generate_random_mdp(options);
}

TabularPolicy build_behavior_policy(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  return softmax_behavior_policy(mdp, cfg.dataset.temperature);
}

OfflineDataset build_dataset(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  if (!cfg.dataset.file.empty()) return load_dataset(cfg.dataset.file);
  const auto& spec = cfg.dataset;
  const auto n_random =
      static_cast<std::size_t>(std::llround(spec.random_fraction * static_cast<double>(spec.episodes)));
  const std::size_t n_behavior = spec.episodes - n_random;
  const std::uint64_t root = cfg.resolved_dataset_seed();

  OfflineDataset data;
  data.n_states = mdp.n_states;
  data.n_actions = mdp.n_actions;
  if (n_behavior > 0) {
    data = collect_dataset(mdp, build_behavior_policy(cfg, mdp), {n_behavior, spec.episode_length, derive_seed(root, 0)});
  }
  if (n_random > 0) {
    const auto uniform = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
    data = concat_datasets(std::move(data), collect_dataset(mdp, uniform, {n_random, spec.episode_length, derive_seed(root, 1)}));
  }
  return data;
}

PlanningConfig build_planning(const ExperimentConfig& cfg, const OfflineDataset& dataset, double gamma) {
  if (cfg.planning.full_horizon) return full_horizon_planning(dataset, gamma);
  return PlanningConfig{cfg.planning.n_max, gamma};
}

}  // namespace vemlab
