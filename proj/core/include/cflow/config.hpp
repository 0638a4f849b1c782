#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflow/coupling.hpp"
#include "cflow/training.hpp"

namespace cflow {

struct NetworkConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t time_features = 8;
};

struct InferenceConfig {
  std::vector<std::size_t> step_counts{1, 2, 4, 8};
  std::size_t instantaneous_reference = 128;
  std::size_t restorations = 10000;
  bool use_ema = false;
  std::size_t dump_trajectories = 0;
  std::size_t w2_projections = 64;
  std::size_t w2_folds = 8;
};

struct DiagnosticsConfig {
  bool enabled = true;
  std::size_t samples = 100000;
  double bandwidth_factor = 0.3;
  std::vector<double> variance_times{0.25, 0.5, 0.75};
  std::size_t grid_bins = 5;
  double grid_extent = 3.0;
  std::size_t jensen_samples = 20000;
  std::size_t jensen_steps = 128;
  std::size_t jensen_trained_samples = 4000;
  std::size_t jensen_trained_steps = 64;
  std::size_t crossing_pairs = 1000;
  std::size_t dump_pairs = 0;
};

/// Full declarative description of one run. Parses from / serializes to the
/// line-based `key = value` format under `[section]` headers; unknown keys
/// are rejected and every constraint violation carries a line number.
struct ExperimentConfig {
  std::uint32_t format_version = 1;
  std::string name = "experiment";
  std::uint64_t seed = 42;
  std::string output_dir = "out";

  std::size_t dim = 2;
  GaussianSpec source;        // rho0 (independent-mode source)
  GaussianSpec prior;         // rho1 (target)
  DegradationModel degradation;
  CouplingMode mode = CouplingMode::OracleAnchored;
  double sigma = 0.05;

  EstimatorTrainConfig estimator;
  std::size_t estimator_dataset = 20000;

  NetworkConfig network;
  TrainConfig training;
  std::size_t checkpoint_every = 0;

  InferenceConfig inference;
  DiagnosticsConfig diagnostics;

  /// Defaults for the vector-valued fields, resolved against `dim`. The
  /// documented default benchmark is the 2-D triangular linear-Gaussian one;
  /// other dims default to zero means and an identity operator.
  static ExperimentConfig defaults(std::size_t dim = 2);

  void validate() const;
  CouplingSetup coupling_setup() const;  // estimator left unset for learned mode
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Hash of the canonical serialization minus the output directory, so a run
/// can be resumed from a copied artifact directory.
std::uint64_t config_hash(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace cflow
