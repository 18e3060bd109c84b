#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "vemlab/training.hpp"

namespace vemlab {

// Run directories hold one CSV per artifact kind. Every CSV starts with
// "# config: <resolved config JSON>" comment lines, then a header row, then
// one row per record.

struct CsvSchema {
  std::string name;  ///< file stem, e.g. "metrics"
  std::vector<std::string> columns;
};

/// metrics, evl, figure1, figure2, figure3, in bundle order.
const std::vector<CsvSchema>& result_schemas();
const CsvSchema& schema_named(std::string_view name);

std::string csv_header(const CsvSchema& schema);
std::string config_comment(std::string_view config_json);

std::string metrics_row(const MetricsRecord& record);

struct EvlRecord {
  std::size_t iteration = 0;
  double mean_value = 0.0;
  double step = 0.0;  ///< sup distance to the previous iterate
  double error_v_star = 0.0;
  double error_v_behavior = 0.0;
};
std::string evl_row(const EvlRecord& record);

/// Append-only CSV log, flushed after every row so a crash leaves complete
/// rows plus at most one torn line.
class CsvLog {
 public:
  CsvLog(const std::filesystem::path& path, const CsvSchema& schema, std::string_view config_json);
  void append(std::string_view row);

 private:
  std::ofstream out_;
};

struct ExportedFile {
  std::string name;
  std::size_t rows = 0;
  bool source_found = false;

  friend bool operator==(const ExportedFile&, const ExportedFile&) = default;
};

/// Writes run_dir/export/<name>.csv for every schema: the source's comment
/// lines, the header, and the complete rows of run_dir/<name>.csv (header-only
/// when the source is absent), plus export/manifest.json. Re-running yields
/// identical bytes.
std::vector<ExportedFile> export_results(const std::filesystem::path& run_dir);

}  // namespace vemlab
