#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace fairaug {

using OrderedJson = nlohmann::ordered_json;

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;  // 16 hex digits
};

// One observation per row; cells are JSON scalars (null for missing).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<OrderedJson>> rows;

  void add_row(std::vector<OrderedJson> row);
};

struct Report {
  std::string type;  // benchmark, policy_grid, psi_sweep, transfer, overlap, ...
  Provenance provenance;
  Table table;
  OrderedJson details = OrderedJson::object();
};

enum class ReportFormat { kJson, kText, kCsv };

// {"type", "provenance", "columns", "rows", "details"}; stable key order.
std::string render_json(const Report& report);
// Column-aligned text with a provenance header line.
std::string render_text(const Report& report);
// Header plus one line per row; every row repeats seed and config_hash.
std::string render_csv(const Report& report);

// Inverse of render_json. Throws DataError on malformed input.
Report parse_report(const std::string& json_text);

// Writes <directory>/<stem>.{json,txt,csv}. Throws DataError when the
// directory cannot be created or a file cannot be written.
void emit_report(const Report& report, const std::string& directory, const std::string& stem,
                 const std::vector<ReportFormat>& formats = {ReportFormat::kJson, ReportFormat::kText,
                                                            ReportFormat::kCsv});

// FNV-1a 64-bit.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

}  // namespace fairaug
