#pragma once

#include "config.hpp"
#include "results.hpp"

namespace avgmart::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs the configured experiment and collects its tables, series and checks.
RunResults run_experiment(const ExperimentConfig& config);

/// run_experiment, then writes the outputs and manifest to config.output_dir.
RunManifest dispatch(const ExperimentConfig& config);

}  // namespace avgmart::cli
