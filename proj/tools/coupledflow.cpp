// Experiment runner CLI: run / resume / diagnose / verify.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cflow/experiment.hpp"

namespace {

struct CommonFlags {
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool ema = false;
  std::vector<std::size_t> steps;
};

void apply_flags(cflow::ExperimentConfig& cfg, const CommonFlags& flags) {
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  if (flags.seed_set) cfg.seed = flags.seed;
  if (flags.ema) cfg.inference.use_ema = true;
  if (!flags.steps.empty()) cfg.inference.step_counts = flags.steps;
  cfg.training.seed = cfg.seed;
}

int report(const cflow::RunOutcome& outcome) {
  if (outcome.exit_code == 0) {
    std::printf("%s (artifacts in %s)\n", outcome.message.c_str(), outcome.output_dir.c_str());
  } else if (!outcome.failure_stage.empty()) {
    std::fprintf(stderr, "failed at stage '%s': %s\n", outcome.failure_stage.c_str(),
                 outcome.message.c_str());
  } else {
    std::fprintf(stderr, "%s\n", outcome.message.c_str());
  }
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupledflow: data-dependent coupling flow matching with shortcut training"};
  app.require_subcommand(1);

  CommonFlags flags;

  std::string run_config;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
  run_cmd->add_option("config", run_config, "experiment config file")->required();
  run_cmd->add_option("--out", flags.out, "output directory override");
  run_cmd->add_option("--seed", flags.seed, "seed override")
      ->each([&](const std::string&) { flags.seed_set = true; });
  run_cmd->add_flag("--ema", flags.ema, "infer with EMA parameters");
  run_cmd->add_option("--steps", flags.steps, "inference step counts override");

  std::string resume_ckpt;
  auto* resume_cmd = app.add_subcommand("resume", "continue training from a checkpoint");
  resume_cmd->add_option("checkpoint", resume_ckpt, "checkpoint file")->required();

  std::string diag_ckpt, diag_config;
  auto* diag_cmd = app.add_subcommand("diagnose", "inference + diagnostics from a checkpoint");
  diag_cmd->add_option("checkpoint", diag_ckpt, "checkpoint file")->required();
  diag_cmd->add_option("config", diag_config, "experiment config file")->required();
  diag_cmd->add_option("--out", flags.out, "output directory override");
  diag_cmd->add_flag("--ema", flags.ema, "infer with EMA parameters");
  diag_cmd->add_option("--steps", flags.steps, "inference step counts override");

  std::string verify_dir;
  auto* verify_cmd = app.add_subcommand("verify", "recompute artifact checksums");
  verify_cmd->add_option("dir", verify_dir, "artifact directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      cflow::ExperimentConfig cfg = cflow::load_config_file(run_config);
      apply_flags(cfg, flags);
      return report(cflow::run_experiment(cfg));
    }
    if (resume_cmd->parsed()) {
      return report(cflow::resume_experiment(resume_ckpt));
    }
    if (diag_cmd->parsed()) {
      cflow::ExperimentConfig cfg = cflow::load_config_file(diag_config);
      apply_flags(cfg, flags);
      return report(cflow::diagnose_experiment(diag_ckpt, cfg));
    }
    if (verify_cmd->parsed()) {
      const auto outcome = cflow::verify_directory(verify_dir);
      std::printf("%s\n", outcome.message.c_str());
      return outcome.exit_code;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
