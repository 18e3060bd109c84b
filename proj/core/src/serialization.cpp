#include "vemlab/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vemlab/error.hpp"

namespace vemlab {

namespace {

using nlohmann::json;

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

const json& field(const json& doc, const char* key, std::string_view what) {
  if (!doc.is_object()) throw FormatError(std::string(what) + ": expected an object");
  const auto it = doc.find(key);
  if (it == doc.end()) throw FormatError(std::string(what) + ": missing field '" + key + "'");
  return *it;
}

std::uint64_t as_unsigned(const json& v, std::string_view what) {
  if (!v.is_number_unsigned()) throw FormatError(std::string(what) + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

double as_double(const json& v, std::string_view what) {
  if (!v.is_number()) throw FormatError(std::string(what) + ": expected a number");
  return v.get<double>();
}

std::vector<double> as_doubles(const json& v, std::string_view what) {
  if (!v.is_array()) throw FormatError(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(as_double(x, what));
  return out;
}

json finite_array(std::span<const double> xs, std::string_view what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw FormatError(std::string(what) + ": cannot serialize non-finite values");
  }
  return json(std::vector<double>(xs.begin(), xs.end()));
}

void check_version(const json& doc, int expected, std::string_view what) {
  const auto version = as_unsigned(field(doc, "version", what), what);
  if (version != static_cast<std::uint64_t>(expected)) {
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(version));
  }
}

json trajectory_to_json(const Trajectory& traj) {
  json steps = json::array();
  for (const auto& step : traj.steps) {
    if (!std::isfinite(step.r)) throw FormatError("dataset: cannot serialize non-finite reward");
    steps.push_back(json::array({step.s, step.a, step.r, step.s_next}));
  }
  json out = {{"episode_id", traj.episode_id}, {"done", traj.done}, {"steps", std::move(steps)}};
  if (!traj.planned_returns.empty()) {
    json returns = json::array();
    for (const auto& r : traj.planned_returns) returns.push_back(finite_array(r, "dataset"));
    out["planned_returns"] = std::move(returns);
  }
  return out;
}

Trajectory trajectory_from_json(const json& doc) {
  constexpr std::string_view what = "dataset trajectory";
  Trajectory traj;
  traj.episode_id = as_unsigned(field(doc, "episode_id", what), what);
  const json& done = field(doc, "done", what);
  if (!done.is_boolean()) throw FormatError("dataset trajectory: 'done' must be a boolean");
  traj.done = done.get<bool>();
  const json& steps = field(doc, "steps", what);
  if (!steps.is_array()) throw FormatError("dataset trajectory: 'steps' must be an array");
  for (const auto& step : steps) {
    if (!step.is_array() || step.size() != 4) throw FormatError("dataset trajectory: each step is [s, a, r, s_next]");
    traj.steps.push_back({as_unsigned(step[0], what), as_unsigned(step[1], what), as_double(step[2], what),
                          as_unsigned(step[3], what)});
  }
  if (const auto it = doc.find("planned_returns"); it != doc.end()) {
    if (!it->is_array()) throw FormatError("dataset trajectory: 'planned_returns' must be an array");
    for (const auto& r : *it) traj.planned_returns.push_back(as_doubles(r, what));
  }
  return traj;
}

}  // namespace

std::string serialize_mdp(const TabularMdp& mdp) {
  mdp.validate();
  json doc;
  doc["version"] = kMdpFormatVersion;
  doc["seed"] = mdp.seed;
  doc["n_states"] = mdp.n_states;
  doc["n_actions"] = mdp.n_actions;
  doc["gamma"] = mdp.gamma;
  doc["next_state"] = mdp.next_state;
  doc["reward"] = finite_array(mdp.reward, "mdp");
  doc["initial_dist"] = finite_array(mdp.initial_dist, "mdp");
  doc["terminal_mask"] = mdp.terminal_mask;
  return doc.dump(1) + "\n";
}

TabularMdp parse_mdp(std::string_view text) {
  constexpr std::string_view what = "mdp";
  const json doc = parse_json(text, what);
  check_version(doc, kMdpFormatVersion, what);
  TabularMdp mdp;
  mdp.seed = as_unsigned(field(doc, "seed", what), what);
  mdp.n_states = as_unsigned(field(doc, "n_states", what), what);
  mdp.n_actions = as_unsigned(field(doc, "n_actions", what), what);
  mdp.gamma = as_double(field(doc, "gamma", what), what);
  const json& next = field(doc, "next_state", what);
  if (!next.is_array()) throw FormatError("mdp: 'next_state' must be an array");
  for (const auto& s : next) mdp.next_state.push_back(as_unsigned(s, what));
  mdp.reward = as_doubles(field(doc, "reward", what), what);
  mdp.initial_dist = as_doubles(field(doc, "initial_dist", what), what);
  const json& mask = field(doc, "terminal_mask", what);
  if (!mask.is_array()) throw FormatError("mdp: 'terminal_mask' must be an array");
  for (const auto& m : mask) {
    if (!m.is_boolean()) throw FormatError("mdp: 'terminal_mask' entries must be booleans");
    mdp.terminal_mask.push_back(m.get<bool>());
  }
  mdp.validate();
  return mdp;
}

std::string serialize_policy(const TabularPolicy& policy) {
  json doc;
  doc["version"] = kPolicyFormatVersion;
  doc["n_states"] = policy.n_states();
  doc["n_actions"] = policy.n_actions();
  doc["probs"] = finite_array(policy.probs(), "policy");
  return doc.dump(1) + "\n";
}

TabularPolicy parse_policy(std::string_view text) {
  constexpr std::string_view what = "policy";
  const json doc = parse_json(text, what);
  check_version(doc, kPolicyFormatVersion, what);
  return TabularPolicy(as_unsigned(field(doc, "n_states", what), what),
                       as_unsigned(field(doc, "n_actions", what), what),
                       as_doubles(field(doc, "probs", what), what));
}

std::string serialize_dataset(const OfflineDataset& dataset) {
  dataset.validate();
  json header = {{"format", "vemlab-dataset"},
                 {"version", kDatasetFormatVersion},
                 {"n_states", dataset.n_states},
                 {"n_actions", dataset.n_actions},
                 {"n_trajectories", dataset.trajectories.size()},
                 {"source", dataset.source}};
  std::string out = header.dump() + "\n";
  for (const auto& traj : dataset.trajectories) out += trajectory_to_json(traj).dump() + "\n";
  return out;
}

OfflineDataset parse_dataset(std::string_view text) {
  constexpr std::string_view what = "dataset header";
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: empty input");
  const json header = parse_json(line, what);
  const json& format = field(header, "format", what);
  if (format != "vemlab-dataset") throw FormatError("dataset: not a vemlab dataset");
  check_version(header, kDatasetFormatVersion, what);
  OfflineDataset dataset;
  dataset.n_states = as_unsigned(field(header, "n_states", what), what);
  dataset.n_actions = as_unsigned(field(header, "n_actions", what), what);
  const json& source = field(header, "source", what);
  if (!source.is_string()) throw FormatError("dataset header: 'source' must be a string");
  dataset.source = source.get<std::string>();
  const auto expected = as_unsigned(field(header, "n_trajectories", what), what);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    dataset.trajectories.push_back(trajectory_from_json(parse_json(line, "dataset trajectory")));
  }
  if (dataset.trajectories.size() != expected) {
    throw FormatError("dataset: header declares " + std::to_string(expected) + " trajectories, found " +
                      std::to_string(dataset.trajectories.size()));
  }
  dataset.validate();
  return dataset;
}

std::string serialize_values(const ValueTable& values) {
  json doc;
  doc["values"] = finite_array(values.values(), "values");
  return doc.dump() + "\n";
}

ValueTable parse_values(std::string_view text) {
  const json doc = parse_json(text, "values");
  return ValueTable(as_doubles(field(doc, "values", "values"), "values"));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + tmp.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

TabularMdp load_mdp(const std::filesystem::path& path) { return parse_mdp(read_text_file(path)); }
void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp) { write_text_file(path, serialize_mdp(mdp)); }
TabularPolicy load_policy(const std::filesystem::path& path) { return parse_policy(read_text_file(path)); }
void save_policy(const std::filesystem::path& path, const TabularPolicy& policy) {
  write_text_file(path, serialize_policy(policy));
}
OfflineDataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_text_file(path)); }
void save_dataset(const std::filesystem::path& path, const OfflineDataset& dataset) {
  write_text_file(path, serialize_dataset(dataset));
}

}  // namespace vemlab
