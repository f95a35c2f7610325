#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idmask/baselines.hpp"
#include "idmask/masker.hpp"
#include "idmask/protocol.hpp"

namespace idmask {

/// Fully resolved run configuration. Text form is one "key = value" per
/// line with '#' comments; the key set is documented in docs/config.md.
/// Perturbation sizes (attack.epsilon, attack.alpha) are written on the
/// 0-255 pixel scale and converted to the unit scale here.
struct RunConfig {
  std::filesystem::path output_dir = "out";
  std::size_t threads = 1;

  BenchmarkConfig benchmark;
  AttackConfig attack;
  std::size_t mmd_batch = kDefaultMmdBatch;
  std::uint64_t augment_seed = 5;
  DiversityConfig diversity;
  DeskModelConfig models;

  std::filesystem::path model_output;  // train-model; empty: <output_dir>/model.embm
  std::filesystem::path surrogate_model;
  std::vector<std::filesystem::path> eval_models;

  std::vector<Method> methods{Method::kTipIm, Method::kMim};
  std::vector<double> gammas;            // evaluate --gamma-sweep values
  std::vector<std::size_t> target_counts;  // bench target-count sweep
  std::vector<std::uint64_t> bench_seeds{1, 2, 3};

  /// Resolved key/value pairs in a stable order; parse(to_text()) round-trips.
  std::string to_text() const;
};

/// Throws ConfigError naming the offending key or line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one "key = value" assignment (used for CLI overrides too).
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace idmask
