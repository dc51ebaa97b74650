#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace avgmart::cli {

using Cell = std::variant<double, std::int64_t, std::string>;

/// One CSV file: header row plus data rows in a fixed column order.
struct Table {
  std::string file_name;
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

/// Two-column gnuplot series (x y per line).
struct Series {
  std::string file_name;
  std::string x_label;
  std::string y_label;
  std::vector<std::pair<double, double>> points;
};

/// A pass/fail comparison reported in checks.csv.
struct Check {
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct RunResults {
  std::vector<Table> tables;
  std::vector<Series> series;
  std::vector<Check> checks;

  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

struct OutputFile {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string tool_version;
  std::string kind;
  std::string config_sha256;
  std::uint64_t master_seed = 0;
  std::string started_utc;
  std::string finished_utc;
  std::vector<OutputFile> files;
  bool all_pass = true;
};

/// Renders a double with 17 significant digits ('.' decimal separator).
std::string format_number(double x);
std::string render_csv(const Table& table);
std::string render_series(const Series& series);

/// Writes every table, series and checks.csv (when there are checks) into
/// dir; returns the file list with digests. IoError names the failing path.
std::vector<OutputFile> write_outputs(const RunResults& results, const std::filesystem::path& dir);

/// Serialises the manifest to dir/manifest.json.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace avgmart::cli
