#include "cli.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vemlab/config.hpp"
#include "vemlab/diagnostics.hpp"
#include "vemlab/error.hpp"
#include "vemlab/random.hpp"
#include "vemlab/results.hpp"
#include "vemlab/serialization.hpp"
#include "vemlab/training.hpp"

namespace vemlab::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kUsage =
    "usage: vemlab <subcommand> [--config FILE] [--set path.to.key=value ...] [--output-dir DIR]\n"
    "subcommands:\n"
    "  gen-mdp       write the configured MDP to <output_dir>/mdp.json\n"
    "  gen-dataset   collect an offline dataset into <output_dir>/dataset.jsonl\n"
    "  solve         print exact V* and behavior values\n"
    "  run-evl       iterate the configured value operator, logging evl.csv\n"
    "  run-vem       train a policy from the offline dataset, logging metrics.csv\n"
    "  diagnose      run the contraction/bias/variance protocols (--jobs N)\n"
    "  eval-policy   evaluate a saved policy (--policy FILE)\n"
    "  export        collect a run directory into <run_dir>/export\n";

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("-c,--config", opts.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--set", opts.overrides, "override a config field, e.g. --set train.tau=0.9");
  sub->add_option("-o,--output-dir", opts.output_dir, "override output_dir");
}

ExperimentConfig load(const CommonOptions& opts) {
  std::vector<std::string> overrides = opts.overrides;
  if (!opts.output_dir.empty()) {
    overrides.push_back("output_dir=" + nlohmann::json(opts.output_dir).dump());
  }
  ExperimentConfig cfg = opts.config_path.empty() ? parse_config("{}", overrides)
                                                  : load_config(opts.config_path, overrides);
  return cfg.resolved();
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text_file(dir / "config.json", serialize_config(cfg));
  return dir;
}

// Config echoed into artifacts. Where the files land and how many threads
// produced them do not change their content, so both are normalized away.
std::string provenance(const ExperimentConfig& cfg) {
  ExperimentConfig echoed = cfg;
  echoed.output_dir.clear();
  echoed.diagnose.settings.jobs = 1;
  return serialize_config_compact(echoed);
}

std::string values_line(const ValueTable& v) { return fmt::format("[{}]", fmt::join(v.values(), ", ")); }

int cmd_gen_mdp(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const TabularMdp mdp = build_mdp(cfg);
  save_mdp(dir / "mdp.json", mdp);
  out << fmt::format("wrote {} ({} states, {} actions, gamma {}, seed {})\n", (dir / "mdp.json").string(),
                     mdp.n_states, mdp.n_actions, mdp.gamma, mdp.seed);
  return kOk;
}

int cmd_gen_dataset(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const TabularMdp mdp = build_mdp(cfg);
  OfflineDataset data = build_dataset(cfg, mdp);
  data.source = provenance(cfg);
  save_dataset(dir / "dataset.jsonl", data);
  out << fmt::format("wrote {} ({} episodes, {} transitions)\n", (dir / "dataset.jsonl").string(),
                     data.trajectories.size(), data.transition_count());
  return kOk;
}

int cmd_solve(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const TabularMdp mdp = build_mdp(cfg);
  const ValueTable v_star = solve_optimal_values(mdp);
  const TabularPolicy mu = build_behavior_policy(cfg, mdp);
  const ValueTable v_mu = solve_behavior_values(mdp, mu);
  nlohmann::json doc = {{"v_star", v_star.raw()},
                        {"v_behavior", v_mu.raw()},
                        {"j_star", evaluate_policy(mdp, greedy_policy(mdp, v_star))},
                        {"j_behavior", evaluate_policy(mdp, mu)}};
  write_text_file(dir / "solve.json", doc.dump(1) + "\n");
  out << "V*: " << values_line(v_star) << "\n";
  out << "V^mu: " << values_line(v_mu) << "\n";
  return kOk;
}

int cmd_run_evl(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const TabularMdp mdp = build_mdp(cfg);
  const TabularPolicy mu = build_behavior_policy(cfg, mdp);
  const ValueTable v_star = solve_optimal_values(mdp);
  const ValueTable v_mu = solve_behavior_values(mdp, mu);
  const ValueOperator op = make_operator(cfg.op, mdp, mu, derive_seed(cfg.seed, streams::kOperatorNoise));

  CsvLog log(dir / "evl.csv", schema_named("evl"), provenance(cfg));
  ValueTable v(mdp.n_states);
  bool converged = false;
  std::size_t k = 0;
  while (k < cfg.evl.max_iters) {
    ValueTable next = op(v);
    ++k;
    if (!next.all_finite()) throw StateError(fmt::format("run-evl: iterate {} is not finite", k));
    const double step = sup_distance(next, v);
    v = std::move(next);
    converged = step <= cfg.evl.tol;
    if (k % cfg.evl.log_period == 0 || converged || k == cfg.evl.max_iters) {
      log.append(evl_row({k, mean_value(v), step, sup_distance(v, v_star), sup_distance(v, v_mu)}));
    }
    if (converged) break;
  }
  out << fmt::format("operator {} tau {} alpha {}: {} after {} iterations\n", to_string(cfg.op.kind), cfg.op.tau,
                     cfg.op.alpha, converged ? "converged" : "stopped", k);
  out << fmt::format("||V - V*|| = {}  ||V - V^mu|| = {}  mean V = {}\n", sup_distance(v, v_star),
                     sup_distance(v, v_mu), mean_value(v));
  return kOk;
}

int cmd_run_vem(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_output(cfg);
  const TabularMdp mdp = build_mdp(cfg);
  OfflineDataset data = build_dataset(cfg, mdp);
  const PlanningConfig plan = build_planning(cfg, data, mdp.gamma);
  TrainConfig train = cfg.resolved_train();
  train.n_max = plan.n_max;

  CsvLog log(dir / "metrics.csv", schema_named("metrics"), provenance(cfg));
  const TrainResult result =
      train_vem(mdp, std::move(data), train, cfg.weighting, [&](const MetricsRecord& r) { log.append(metrics_row(r)); });

  save_policy(dir / "policy.json", result.policy);
  nlohmann::json critics = nlohmann::json::object();
  for (std::size_t i = 0; i < result.critics.online.size(); ++i) {
    critics["online"].push_back(result.critics.online[i].raw());
    critics["target"].push_back(result.critics.target[i].raw());
  }
  write_text_file(dir / "critics.json", critics.dump(1) + "\n");
  save_dataset(dir / "memory.jsonl", result.memory);

  const double j_star = evaluate_policy(mdp, greedy_policy(mdp, solve_optimal_values(mdp)));
  const double j = result.metrics.empty() ? evaluate_policy(mdp, result.policy) : result.metrics.back().policy_return;
  out << fmt::format("n_max {}  steps {}  J(pi) = {}  J* = {}  ratio = {}\n", plan.n_max, train.total_steps, j,
                     j_star, j_star != 0.0 ? j / j_star : 0.0);
  out << fmt::format("steps to 95% of final J: {}  max critic value: {}\n",
                     steps_to_fraction_of_final(result.metrics, 0.95), result.max_critic_value);
  return kOk;
}

int cmd_diagnose(ExperimentConfig cfg, std::size_t jobs, std::ostream& out) {
  if (jobs > 0) cfg.diagnose.settings.jobs = jobs;
  const fs::path dir = prepare_output(cfg);
  const auto& d = cfg.diagnose;
  const std::string comment = config_comment(provenance(cfg));
  const bool all = d.protocol == "all";
  if (all || d.protocol == "figure1") {
    const auto rows = run_figure1_protocol(d.seeds, d.noise_sigma, d.noisy_taus, d.settings);
    write_text_file(dir / "figure1.csv", comment + noisy_curve_csv(rows, d.settings, d.seeds));
    out << fmt::format("figure1: {} rows -> {}\n", rows.size(), (dir / "figure1.csv").string());
  }
  if (all || d.protocol == "figure2") {
    const auto rows = run_figure2_protocol(d.seeds, d.taus, d.n_maxes, d.settings);
    write_text_file(dir / "figure2.csv", comment + diagnostics_csv(rows, d.settings, d.seeds));
    out << fmt::format("figure2: {} rows -> {}\n", rows.size(), (dir / "figure2.csv").string());
  }
  if (all || d.protocol == "figure3") {
    const auto rows = run_figure3_protocol(d.seeds, d.temperatures, d.taus, d.settings);
    write_text_file(dir / "figure3.csv", comment + diagnostics_csv(rows, d.settings, d.seeds));
    out << fmt::format("figure3: {} rows -> {}\n", rows.size(), (dir / "figure3.csv").string());
  }
  return kOk;
}

int cmd_eval_policy(const ExperimentConfig& cfg, const std::string& policy_path, std::ostream& out) {
  const TabularMdp mdp = build_mdp(cfg);
  const TabularPolicy pi = load_policy(policy_path);
  if (pi.n_states() != mdp.n_states || pi.n_actions() != mdp.n_actions) {
    throw ParameterError("policy dimensions do not match the MDP");
  }
  const double j = evaluate_policy(mdp, pi);
  const double j_star = evaluate_policy(mdp, greedy_policy(mdp, solve_optimal_values(mdp)));
  out << fmt::format("J(pi) = {}\nJ* = {}\n", j, j_star);
  out << "state argmax\n";
  for (StateIndex s = 0; s < mdp.n_states; ++s) out << fmt::format("{} {}\n", s, pi.argmax(s));
  return kOk;
}

int cmd_export(const ExperimentConfig& cfg, const std::string& run_dir, std::ostream& out) {
  const fs::path dir = run_dir.empty() ? fs::path(cfg.output_dir) : fs::path(run_dir);
  for (const auto& file : export_results(dir)) {
    out << fmt::format("{}: {} rows{}\n", file.name, file.rows, file.source_found ? "" : " (no source, header only)");
  }
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> known = {"gen-mdp", "gen-dataset",  "solve",       "run-evl",
                                                 "run-vem", "diagnose",     "eval-policy", "export"};
  if (argc < 2) {
    err << kUsage;
    return kUsageError;
  }
  const std::string first = argv[1];
  if (first == "-h" || first == "--help") {
    out << kUsage;
    return kOk;
  }
  if (std::find(known.begin(), known.end(), first) == known.end()) {
    err << "unknown subcommand '" << first << "'\n" << kUsage;
    return kUsageError;
  }

  CLI::App app{"Tabular lab for expectile value learning and episodic memory planning", "vemlab"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string policy_path;
  std::string run_dir;
  std::size_t jobs = 0;
  for (const auto& name : known) {
    CLI::App* sub = app.add_subcommand(name);
    add_common(sub, opts);
    if (name == "diagnose") sub->add_option("-j,--jobs", jobs, "worker threads for the seed grid");
    if (name == "eval-policy") sub->add_option("--policy", policy_path, "policy JSON")->required();
    if (name == "export") sub->add_option("--run-dir", run_dir, "run directory (defaults to output_dir)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << kUsage;
    return kUsageError;
  }

  ExperimentConfig cfg;
  try {
    cfg = load(opts);
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (first == "gen-mdp") return cmd_gen_mdp(cfg, out);
    if (first == "gen-dataset") return cmd_gen_dataset(cfg, out);
    if (first == "solve") return cmd_solve(cfg, out);
    if (first == "run-evl") return cmd_run_evl(cfg, out);
    if (first == "run-vem") return cmd_run_vem(cfg, out);
    if (first == "diagnose") return cmd_diagnose(cfg, jobs, out);
    if (first == "eval-policy") return cmd_eval_policy(cfg, policy_path, out);
    return cmd_export(cfg, run_dir, out);
  } catch (const ParameterError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace vemlab::cli
