#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "avgmart/error.hpp"
#include "src/cli_error.hpp"
#include "src/config.hpp"
#include "src/experiments.hpp"

namespace {

enum ExitCode { kPass = 0, kCheckFailure = 1, kUsageError = 2, kRuntimeError = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Martingale decomposition and averaging experiments"};
  app.set_version_flag("--version", avgmart::cli::kToolVersion);
  std::string kind_name;
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> n_paths;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  app.add_option("kind", kind_name,
                 "simulate | decompose | chain | concentration | averaging | report")
      ->required();
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--paths", n_paths, "number of paths (overrides n_paths)")
      ->check(CLI::PositiveNumber);
  app.add_option("--dt", dt, "time step (overrides dt)")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "master seed (overrides master_seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsageError;
  }

  using avgmart::cli::CliError;
  using avgmart::cli::CliErrorKind;
  avgmart::cli::ExperimentConfig config;
  try {
    avgmart::cli::ConfigOverrides overrides;
    if (out_dir) overrides.output_dir = *out_dir;
    overrides.n_paths = n_paths;
    overrides.dt = dt;
    overrides.master_seed = seed;
    config = avgmart::cli::parse_config(config_path, avgmart::cli::parse_kind(kind_name), overrides);
  } catch (const CliError& e) {
    std::cerr << "avgmart: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "avgmart: config error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    const auto manifest = avgmart::cli::dispatch(config);
    std::cout << "avgmart " << manifest.kind << ": wrote " << manifest.files.size()
              << " files to " << config.output_dir.string() << " ("
              << (manifest.all_pass ? "all checks pass" : "CHECK FAILURE") << ")\n";
    return manifest.all_pass ? kPass : kCheckFailure;
  } catch (const CliError& e) {
    std::cerr << "avgmart: " << e.what() << "\n";
    return e.kind() == CliErrorKind::IoError ? kRuntimeError : kUsageError;
  } catch (const avgmart::Error& e) {
    std::cerr << "avgmart " << avgmart::cli::to_string(config.kind) << ": " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "avgmart " << avgmart::cli::to_string(config.kind) << ": " << e.what() << "\n";
    return kRuntimeError;
  }
}
