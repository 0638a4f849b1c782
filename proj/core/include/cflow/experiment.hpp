#pragma once

#include <string>

#include "cflow/config.hpp"

namespace cflow {

struct RunOutcome {
  int exit_code = 0;
  std::string failure_stage;  // empty on success
  std::string message;
  std::string output_dir;
};

/// Full pipeline: (learned) estimator fit, training, inference sweep,
/// diagnostics, report, manifest. Every stage draws from substreams of the
/// config seed, so two runs with the same config produce byte-identical
/// artifacts up to wall-clock columns. On error the remaining stages are
/// skipped and the MANIFEST records the failing stage.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// Continues training from a checkpoint. Reads `config.resolved` next to the
/// checkpoint, validates the stored config hash, and writes into the
/// checkpoint's directory (the config's own output_dir is ignored so copied
/// artifact directories resume in place). The training log is appended.
RunOutcome resume_experiment(const std::string& checkpoint_path);

/// Inference + diagnostics from an existing checkpoint, no training.
RunOutcome diagnose_experiment(const std::string& checkpoint_path, const ExperimentConfig& cfg);

/// Recomputes artifact checksums against the MANIFEST.
RunOutcome verify_directory(const std::string& dir);

}  // namespace cflow
