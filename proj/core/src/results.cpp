#include "vemlab/results.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "vemlab/diagnostics.hpp"
#include "vemlab/error.hpp"
#include "vemlab/serialization.hpp"

namespace vemlab {

namespace {

std::size_t count_fields(std::string_view line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

const std::vector<CsvSchema>& result_schemas() {
  static const std::vector<CsvSchema> schemas = {
      {"metrics",
       {"step", "critic_loss_1", "critic_loss_2", "policy_return", "mean_value", "value_error", "max_value"}},
      {"evl", {"iteration", "mean_value", "step", "error_v_star", "error_v_behavior"}},
      {"figure1", noisy_curve_csv_columns()},
      {"figure2", diagnostics_csv_columns()},
      {"figure3", diagnostics_csv_columns()},
  };
  return schemas;
}

const CsvSchema& schema_named(std::string_view name) {
  for (const auto& schema : result_schemas()) {
    if (schema.name == name) return schema;
  }
  throw ParameterError("unknown result schema '" + std::string(name) + "'");
}

std::string csv_header(const CsvSchema& schema) { return fmt::format("{}\n", fmt::join(schema.columns, ",")); }

std::string config_comment(std::string_view config_json) { return fmt::format("# config: {}\n", config_json); }

std::string metrics_row(const MetricsRecord& r) {
  return fmt::format("{},{},{},{},{},{},{}\n", r.step, r.critic_loss_1, r.critic_loss_2, r.policy_return,
                     r.mean_value, r.value_error, r.max_value);
}

std::string evl_row(const EvlRecord& r) {
  return fmt::format("{},{},{},{},{}\n", r.iteration, r.mean_value, r.step, r.error_v_star, r.error_v_behavior);
}

CsvLog::CsvLog(const std::filesystem::path& path, const CsvSchema& schema, std::string_view config_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw FormatError("cannot open '" + path.string() + "' for writing");
  out_ << config_comment(config_json) << csv_header(schema);
  out_.flush();
}

void CsvLog::append(std::string_view row) {
  out_ << row;
  out_.flush();
  if (!out_) throw FormatError("metrics log write failed");
}

std::vector<ExportedFile> export_results(const std::filesystem::path& run_dir) {
  if (!std::filesystem::is_directory(run_dir)) {
    throw ParameterError("run directory '" + run_dir.string() + "' does not exist");
  }
  const auto out_dir = run_dir / "export";
  std::vector<ExportedFile> summary;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& schema : result_schemas()) {
    ExportedFile file{schema.name, 0, false};
    std::string comments;
    std::string rows;
    const auto source = run_dir / (schema.name + ".csv");
    if (std::filesystem::is_regular_file(source)) {
      file.source_found = true;
      const std::string text = read_text_file(source);
      const std::string header = csv_header(schema);
      std::size_t pos = 0;
      bool header_seen = false;
      while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        if (end == std::string::npos) break;  // torn final line
        const std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        if (!header_seen) {
          if (line.front() == '#') {
            comments.append(line).push_back('\n');
            continue;
          }
          if (std::string(line) + "\n" != header) {
            throw FormatError("'" + source.string() + "' does not match the " + schema.name + " schema");
          }
          header_seen = true;
          continue;
        }
        if (count_fields(line) != schema.columns.size()) continue;
        rows.append(line).push_back('\n');
        ++file.rows;
      }
    }
    write_text_file(out_dir / (schema.name + ".csv"), comments + csv_header(schema) + rows);
    manifest.push_back({{"name", file.name}, {"rows", file.rows}, {"source_found", file.source_found}});
    summary.push_back(std::move(file));
  }
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace vemlab
