#include "fairaug/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "fairaug/errors.hpp"

namespace fairaug {

void Table::add_row(std::vector<OrderedJson> row) {
  if (row.size() != columns.size()) throw ContractError("table row width differs from header");
  rows.push_back(std::move(row));
}

namespace {

std::string cell_text(const OrderedJson& v, bool precise) {
  if (v.is_null()) return precise ? "" : "-";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return precise ? fmt::format("{:.10g}", v.get<double>()) : fmt::format("{:.4f}", v.get<double>());
  return v.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string render_json(const Report& report) {
  OrderedJson j;
  j["type"] = report.type;
  j["provenance"] = {{"seed", report.provenance.seed}, {"config_hash", report.provenance.config_hash}};
  j["columns"] = report.table.columns;
  j["rows"] = OrderedJson::array();
  for (const auto& row : report.table.rows) j["rows"].push_back(row);
  j["details"] = report.details;
  return j.dump(2) + "\n";
}

std::string render_text(const Report& report) {
  const auto& t = report.table;
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t c = 0; c < t.columns.size(); ++c) width[c] = t.columns[c].size();
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : t.rows) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line.push_back(cell_text(row[c], false));
      width[c] = std::max(width[c], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream out;
  out << "# " << report.type << "  seed=" << report.provenance.seed << "  config=" << report.provenance.config_hash
      << '\n';
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out << fmt::format("{:<{}}", line[c], width[c]);
      out << (c + 1 < line.size() ? "  " : "");
    }
    out << '\n';
  };
  emit(t.columns);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& line : cells) emit(line);
  return out.str();
}

std::string render_csv(const Report& report) {
  std::ostringstream out;
  for (const auto& c : report.table.columns) out << csv_escape(c) << ',';
  out << "seed,config_hash\n";
  for (const auto& row : report.table.rows) {
    for (const auto& v : row) out << csv_escape(cell_text(v, true)) << ',';
    out << report.provenance.seed << ',' << report.provenance.config_hash << '\n';
  }
  return out.str();
}

Report parse_report(const std::string& json_text) {
  Report r;
  try {
    const auto j = OrderedJson::parse(json_text);
    r.type = j.at("type").get<std::string>();
    r.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    r.provenance.config_hash = j.at("provenance").at("config_hash").get<std::string>();
    r.table.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) r.table.add_row(row.get<std::vector<OrderedJson>>());
    r.details = j.value("details", OrderedJson::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void emit_report(const Report& report, const std::string& directory, const std::string& stem,
                 const std::vector<ReportFormat>& formats) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw DataError("cannot create output directory " + directory + ": " + ec.message());
  for (auto f : formats) {
    const char* ext = f == ReportFormat::kJson ? ".json" : f == ReportFormat::kText ? ".txt" : ".csv";
    const auto path = std::filesystem::path(directory) / (stem + ext);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << (f == ReportFormat::kJson ? render_json(report)
            : f == ReportFormat::kText ? render_text(report)
                                       : render_csv(report));
    if (!out) throw DataError("write failed for " + path.string());
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

}  // namespace fairaug
