#include <cmath>
#include <cstdio>
#include <fstream>
#include <system_error>

#include "json.hpp"

#include "cli_error.hpp"
#include "digest.hpp"
#include "results.hpp"

namespace avgmart::cli {
namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_cell(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return csv_field(std::get<std::string>(cell));
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw CliError(CliErrorKind::IoError, dir.string(), "cannot create output directory");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError(CliErrorKind::IoError, path.string(), "cannot open for writing");
  out << text;
  out.close();
  if (!out) throw CliError(CliErrorKind::IoError, path.string(), "write failed");
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string render_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += csv_field(table.header[i]);
  }
  out += "\r\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += render_cell(row[i]);
    }
    out += "\r\n";
  }
  return out;
}

std::string render_series(const Series& series) {
  std::string out = "# " + series.x_label + " " + series.y_label + "\n";
  for (const auto& [x, y] : series.points) out += format_number(x) + " " + format_number(y) + "\n";
  return out;
}

std::vector<OutputFile> write_outputs(const RunResults& results,
                                      const std::filesystem::path& dir) {
  ensure_dir(dir);
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& t : results.tables) files.emplace_back(t.file_name, render_csv(t));
  for (const auto& s : results.series) files.emplace_back(s.file_name, render_series(s));
  if (!results.checks.empty()) {
    Table checks{"checks.csv", {"name", "value", "reference", "tolerance", "status"}, {}};
    for (const auto& c : results.checks) {
      checks.rows.push_back({c.name, c.value, c.reference, c.tolerance,
                             std::string(c.pass ? "pass" : "fail")});
    }
    files.emplace_back(checks.file_name, render_csv(checks));
  }
  std::vector<OutputFile> listing;
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    listing.push_back({name, sha256_hex(text), text.size()});
  }
  return listing;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  ensure_dir(dir);
  nlohmann::ordered_json doc;
  doc["tool"] = "avgmart";
  doc["version"] = m.tool_version;
  doc["kind"] = m.kind;
  doc["config_sha256"] = m.config_sha256;
  doc["master_seed"] = m.master_seed;
  doc["started_utc"] = m.started_utc;
  doc["finished_utc"] = m.finished_utc;
  doc["all_pass"] = m.all_pass;
  doc["files"] = nlohmann::ordered_json::array();
  for (const auto& f : m.files) {
    doc["files"].push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  }
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace avgmart::cli
