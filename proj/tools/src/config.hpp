#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"

#include "avgmart/averaging.hpp"
#include "avgmart/chain.hpp"
#include "avgmart/model.hpp"

namespace avgmart::cli {

enum class ExperimentKind { Simulate, Decompose, Chain, Concentration, Averaging, Report };

const char* to_string(ExperimentKind kind);
/// Throws UnknownKind for anything outside the six kinds.
ExperimentKind parse_kind(const std::string& name);

struct SimulateSettings {
  LinearModel model;
  Eigen::VectorXd x0;
  std::size_t rows = 100;         // time rows in moments.csv
  std::size_t sample_paths = 5;   // paths written as .dat series
};

struct DecomposeSettings {
  LinearModel model;
  Eigen::VectorXd x0;
  Eigen::VectorXd weight;
  double offset = 0.0;
};

struct ChainSettings {
  ChainModel chain;
  std::filesystem::path chain_file;
};

struct ConcentrationSettings {
  LinearModel model;
  Eigen::VectorXd x0;
  Eigen::VectorXd weight;
  std::size_t n_R = 20;
  std::optional<double> R_max;  // default 4 sqrt(V_T / T)
};

struct AveragingSettings {
  TwoTimescaleParams params;
  double x0_minus_y0 = 2.0;
};

struct ReportSettings {};

using KindSettings = std::variant<SimulateSettings, DecomposeSettings, ChainSettings,
                                  ConcentrationSettings, AveragingSettings, ReportSettings>;

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> n_paths;
  std::optional<double> dt;
  std::optional<std::uint64_t> master_seed;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Report;
  std::filesystem::path config_path;
  std::string config_sha256;  // digest of the config file bytes
  std::filesystem::path output_dir;
  std::uint64_t master_seed = 0;
  std::size_t n_paths = 10000;
  double dt = 1e-3;
  double t0 = 0.0;
  double T = 1.0;
  unsigned threads = 0;
  std::map<std::string, double> tolerances;
  KindSettings settings;

  double tolerance(const std::string& name, double fallback) const {
    const auto it = tolerances.find(name);
    return it == tolerances.end() ? fallback : it->second;
  }
};

/// Reads and validates a config. `kind` comes from the command line; a
/// "kind" entry in the file, when present, must agree with it.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              std::optional<ExperimentKind> kind = std::nullopt,
                              const ConfigOverrides& overrides = {});

ExperimentConfig config_from_json(const nlohmann::json& doc, std::optional<ExperimentKind> kind,
                                  const ConfigOverrides& overrides,
                                  const std::filesystem::path& base_dir);

}  // namespace avgmart::cli
