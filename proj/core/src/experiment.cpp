#include "cflow/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "cflow/checkpoint.hpp"
#include "cflow/diagnostics.hpp"
#include "cflow/ode.hpp"
#include "cflow/parallel.hpp"

namespace cflow {

namespace fs = std::filesystem;

namespace {

// Stream tags; every stage owns a disjoint substream family of the run seed.
constexpr std::uint64_t kDatasetStream = 101;
constexpr std::uint64_t kEstimatorStream = 102;
constexpr std::uint64_t kInferenceStream = 103;
constexpr std::uint64_t kVarianceStream = 104;
constexpr std::uint64_t kJensenStream = 105;
constexpr std::uint64_t kTransportStream = 106;
constexpr std::uint64_t kCrossingStream = 107;
constexpr std::uint64_t kStraightStream = 108;
constexpr std::uint64_t kMomentStream = 109;
constexpr std::uint64_t kW2Stream = 110;

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string num6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::string& quantity, std::uint64_t seed,
          std::uint64_t hash, const std::string& columns, bool append = false)
      : path_(path) {
    const bool exists = fs::exists(path);
    out_.open(path, append ? (std::ios::out | std::ios::app) : (std::ios::out | std::ios::trunc));
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    if (!append || !exists) {
      out_ << "# quantity=" << quantity << ",seed=" << seed << ",config_hash=" << hex64(hash)
           << ",generator=" << Rng::kGeneratorName << "\n";
      out_ << columns << "\n";
    }
  }

  void row(const std::string& line) { out_ << line << "\n"; }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

struct DiagnosticRow {
  std::string quantity;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

struct ReportCheck {
  std::string label;
  bool pass = true;
  std::string detail;
};

// Everything a run accumulates before the report/manifest stages.
struct Pipeline {
  ExperimentConfig cfg;
  fs::path dir;
  std::uint64_t hash = 0;
  CouplingSetup setup;
  std::optional<double> estimator_holdout_mse;

  TrainState state;
  bool has_net = false;       // trained or loaded parameters are meaningful
  bool nan_abort = false;

  std::vector<DiagnosticRow> summary;
  std::vector<ReportCheck> property1_checks;
  std::vector<ReportCheck> property2_checks;
  std::vector<std::string> notes;
  std::map<std::string, double> endpoint_w2;  // "shortcut/1" etc. for the report
  double final_fm_loss = 0.0, final_sc_loss = 0.0;

  std::vector<std::string> artifacts;

  void note(const std::string& s) { notes.push_back(s); }
  void record(const std::string& file) {
    if (std::find(artifacts.begin(), artifacts.end(), file) == artifacts.end())
      artifacts.push_back(file);
  }
};

Field trained_field(const Pipeline& p) {
  if (!p.has_net) throw ConfigError("trained_field: no trained parameters available");
  if (p.cfg.inference.use_ema)
    return make_net_field(p.state.net, p.cfg.training.conditioning, p.state.ema.params);
  return make_net_field(p.state.net, p.cfg.training.conditioning);
}

void stage_setup(Pipeline& p) {
  fs::create_directories(p.dir);
  std::ofstream cfg_out(p.dir / "config.resolved", std::ios::trunc);
  if (!cfg_out) throw IoError("cannot write config.resolved");
  cfg_out << serialize_config(p.cfg);
  cfg_out.close();
  if (cfg_out.fail()) throw IoError("failed writing config.resolved");
  p.record("config.resolved");
}

void stage_estimator(Pipeline& p) {
  if (p.cfg.mode != CouplingMode::LearnedAnchored) return;
  Rng data_rng = Rng(p.cfg.seed).substream(kDatasetStream);
  std::vector<std::pair<Vec, Vec>> dataset(p.cfg.estimator_dataset);
  for (auto& [lq, z1] : dataset) {
    z1 = p.cfg.prior.sample(data_rng);
    lq = degrade(z1, p.cfg.degradation, data_rng);
  }
  EstimatorTrainConfig ecfg = p.cfg.estimator;
  ecfg.seed = Rng(p.cfg.seed).substream(kEstimatorStream).seed();
  FitResult fit = fit_conditional_mean(dataset, ecfg);
  p.estimator_holdout_mse = fit.holdout_mse;
  p.setup.estimator = std::move(fit.estimator);
}

void stage_train(Pipeline& p, bool resume) {
  const PairSampler sampler = p.setup.sampler();
  const fs::path log_path = p.dir / "train_log.csv";
  CsvFile log(log_path, "train_log", p.cfg.seed, p.hash,
              "iteration,fm_loss,sc_loss,grad_norm,wall_ms", resume);
  p.record("train_log.csv");

  auto save = [&](const std::string& name) {
    Checkpoint ckpt;
    ckpt.widths = p.state.net.mlp.widths;
    ckpt.params = p.state.net.mlp.params;
    ckpt.ema = p.state.ema.params;
    ckpt.adam_m = p.state.opt.m;
    ckpt.adam_v = p.state.opt.v;
    ckpt.adam_step = p.state.opt.step;
    ckpt.learning_rate = p.state.opt.learning_rate;
    ckpt.beta1 = p.state.opt.beta1;
    ckpt.beta2 = p.state.opt.beta2;
    ckpt.epsilon = p.state.opt.epsilon;
    ckpt.iteration = p.state.iteration;
    ckpt.config_hash = p.hash;
    ckpt.rng_seed = p.cfg.seed;
    save_checkpoint((p.dir / name).string(), ckpt);
    p.record(name);
  };

  const std::size_t chunk =
      p.cfg.checkpoint_every == 0 ? p.cfg.training.iterations : p.cfg.checkpoint_every;
  while (p.state.iteration < p.cfg.training.iterations) {
    TrainResult res = train(p.cfg.training, sampler, std::move(p.state), chunk);
    p.state = std::move(res.state);
    for (const auto& r : res.log) {
      log.row(std::to_string(r.iteration) + "," + num17(r.fm_loss) + "," + num17(r.sc_loss) +
              "," + num17(r.grad_norm) + "," + num17(r.wall_ms));
      p.final_fm_loss = r.fm_loss;
      p.final_sc_loss = r.sc_loss;
    }
    if (res.nan_abort) {
      log.close();
      save("checkpoint.bin");
      p.nan_abort = true;
      throw TrainingError("training aborted: non-finite loss after iteration " +
                          std::to_string(p.state.iteration) + "; last-good checkpoint retained");
    }
    if (p.cfg.checkpoint_every != 0 && p.state.iteration < p.cfg.training.iterations) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%06llu.bin",
                    static_cast<unsigned long long>(p.state.iteration));
      save(name);
    }
  }
  log.close();
  save("checkpoint.bin");
  p.has_net = true;
}

void stage_inference(Pipeline& p) {
  if (!p.has_net) return;
  const Field field = trained_field(p);
  const bool indep = p.cfg.mode == CouplingMode::Independent;
  const std::size_t n = p.cfg.inference.restorations;
  const std::size_t d = p.cfg.dim;
  const Rng root = Rng(p.cfg.seed).substream(kInferenceStream);

  std::vector<Vec> truth(n), z0(n), cond(n);
  for (std::size_t r = 0; r < n; ++r) {
    Rng rr = root.substream(r);
    if (indep) {
      truth[r] = p.cfg.prior.sample(rr);
      z0[r] = p.cfg.source.sample(rr);
      cond[r] = zeros(d);
    } else {
      truth[r] = p.cfg.prior.sample(rr);
      const Vec lq = degrade(truth[r], p.cfg.degradation, rr);
      cond[r] = p.setup.anchor_estimator()(lq);
      z0[r] = anchored_source(cond[r], p.cfg.sigma, rr);
    }
  }

  CsvFile metrics(p.dir / "endpoint_metrics.csv", "endpoint_metrics", p.cfg.seed, p.hash,
                  "mode,steps,sliced_w2,std_error,n_restorations");
  p.record("endpoint_metrics.csv");

  auto evaluate = [&](const std::string& mode_name, std::size_t steps, DtMode mode) {
    std::vector<Vec> endpoints(n);
    parallel_for(n, [&](std::size_t r) {
      endpoints[r] = integrate(field, z0[r], cond[r], steps, mode).states.back();
    });
    Rng w2_rng = Rng(p.cfg.seed).substream(kW2Stream);
    const double w2 =
        sliced_w2(endpoints, truth, p.cfg.inference.w2_projections, w2_rng);
    Rng fold_rng = Rng(p.cfg.seed).substream(kW2Stream);
    const auto folds = sliced_w2_per_fold(endpoints, truth, p.cfg.inference.w2_projections,
                                          p.cfg.inference.w2_folds, fold_rng);
    const Moment fold_m = moment_of(folds);
    metrics.row(mode_name + "," + std::to_string(steps) + "," + num17(w2) + "," +
                num17(fold_m.std_error) + "," + std::to_string(n));
    p.endpoint_w2[mode_name + "/" + std::to_string(steps)] = w2;
  };

  for (std::size_t steps : p.cfg.inference.step_counts)
    evaluate("shortcut", steps, DtMode::Shortcut);
  evaluate("instantaneous", p.cfg.inference.instantaneous_reference, DtMode::Instantaneous);
  metrics.close();

  if (p.cfg.inference.dump_trajectories > 0) {
    CsvFile traj_csv(p.dir / "trajectories.csv", "trajectories", p.cfg.seed, p.hash,
                     [&] {
                       std::string cols = "traj_id,step,t";
                       for (std::size_t i = 0; i < d; ++i) cols += ",z_" + std::to_string(i);
                       return cols;
                     }());
    const std::size_t count = std::min(p.cfg.inference.dump_trajectories, n);
    for (std::size_t r = 0; r < count; ++r) {
      const Trajectory traj =
          integrate(field, z0[r], cond[r], p.cfg.inference.instantaneous_reference,
                    DtMode::Instantaneous);
      for (std::size_t s = 0; s < traj.times.size(); ++s) {
        std::string line = std::to_string(r) + "," + std::to_string(s) + "," +
                           num17(traj.times[s]);
        for (double x : traj.states[s]) line += "," + num17(x);
        traj_csv.row(line);
      }
    }
    traj_csv.close();
    p.record("trajectories.csv");
  }
}

CouplingSetup with_mode(const CouplingSetup& base, CouplingMode mode) {
  CouplingSetup setup = base;
  setup.mode = mode;
  if (mode != CouplingMode::LearnedAnchored) setup.estimator.reset();
  return setup;
}

void stage_diagnostics(Pipeline& p) {
  if (!p.cfg.diagnostics.enabled) return;
  const DiagnosticsConfig& dc = p.cfg.diagnostics;
  const bool indep = p.cfg.mode == CouplingMode::Independent;

  // ---- Property 1: conditional velocity variance, coupled vs independent.
  CsvFile prof_csv(p.dir / "property1_variance.csv", "conditional_velocity_variance", p.cfg.seed,
                   p.hash, [&] {
                     std::string cols = "arm,t";
                     for (std::size_t i = 0; i < p.cfg.dim; ++i)
                       cols += ",center_" + std::to_string(i);
                     return cols + ",lambda,std_error,n_eff,valid";
                   }());
  p.record("property1_variance.csv");

  const CouplingSetup indep_setup = with_mode(p.setup, CouplingMode::Independent);
  struct Arm {
    std::string name;
    PairSampler sampler;
  };
  std::vector<Arm> arms;
  arms.push_back({"independent", indep_setup.sampler()});
  if (!indep) arms.push_back({to_string(p.cfg.mode), p.setup.sampler()});

  std::map<std::string, std::map<double, std::pair<double, double>>> averages;
  std::size_t stream_idx = 0;
  for (const auto& arm : arms) {
    for (double t_raw : dc.variance_times) {
      // Lipschitz-bound validity is unknown near the endpoints; clamp and flag.
      const double t = std::clamp(t_raw, 0.1, 0.9);
      if (t != t_raw)
        p.note("variance time " + num6(t_raw) + " clamped to " + num6(t) +
               " (reported range is [0.1, 0.9])");
      Rng rng = Rng(p.cfg.seed).substream(kVarianceStream).substream(stream_idx++);
      Rng grid_rng = rng.split();
      const auto grid =
          variance_grid(arm.sampler, t, dc.grid_bins, dc.grid_extent, 20000, grid_rng);
      const VarianceProfile prof = conditional_velocity_variance(
          arm.sampler, t, grid, dc.bandwidth_factor, dc.samples, rng);
      for (const auto& bin : prof.bins) {
        std::string line = arm.name + "," + num17(bin.t);
        for (double x : bin.center) line += "," + num17(x);
        line += "," + num17(bin.lambda) + "," + num17(bin.std_error) + "," +
                num17(bin.n_eff) + "," + (bin.valid ? "1" : "0");
        prof_csv.row(line);
      }
      const double avg = prof.bin_average();
      const double se = prof.bin_average_se();
      averages[arm.name][t] = {avg, se};
      p.summary.push_back({"lambda_binavg[" + arm.name + ",t=" + num6(t) + "]", avg, se,
                           dc.samples});
    }
  }
  prof_csv.close();

  if (!indep) {
    const std::string coupled = to_string(p.cfg.mode);
    for (const auto& [t, dep] : averages[coupled]) {
      const auto& ind = averages["independent"][t];
      const double ratio = dep.first / ind.first;
      ReportCheck check;
      check.label = "property1 t=" + num6(t);
      check.pass = ratio <= 0.1 && dep.second <= 0.1 * dep.first && ind.second <= 0.1 * ind.first;
      check.detail = "lambda_dep=" + num6(dep.first) + " lambda_ind=" + num6(ind.first) +
                     " ratio=" + num6(ratio) + " (gate: ratio <= 0.1, se <= 10%)";
      p.property1_checks.push_back(check);
      p.summary.push_back({"lambda_ratio[t=" + num6(t) + "]", ratio, 0.0, dc.samples});
    }
  } else {
    p.note("property 1 ratio skipped: run uses independent coupling (no data-dependent arm)");
  }

  // ---- Property 2: kinetic energy vs expected squared displacement.
  const PairSampler own_sampler = p.setup.sampler();
  auto jensen_check = [&](const std::string& label, const Field& field, std::size_t samples,
                          std::size_t steps, std::uint64_t key) {
    Rng rng = Rng(p.cfg.seed).substream(kJensenStream).substream(key);
    const JensenResult jr = jensen_gap(field, own_sampler, samples, steps, rng);
    const double slack = 3.0 * std::sqrt(jr.lhs.std_error * jr.lhs.std_error +
                                         jr.rhs.std_error * jr.rhs.std_error);
    ReportCheck check;
    check.label = "property2 " + label;
    check.pass = jr.lhs.value <= jr.rhs.value + slack;
    check.detail = "lhs=" + num6(jr.lhs.value) + " rhs=" + num6(jr.rhs.value) +
                   " slack(3se)=" + num6(slack);
    p.property2_checks.push_back(check);
    p.summary.push_back({"jensen_lhs[" + label + "]", jr.lhs.value, jr.lhs.std_error, samples});
    p.summary.push_back({"jensen_rhs[" + label + "]", jr.rhs.value, jr.rhs.std_error, samples});
  };

  {
    GaussianCouplingMoments moments;
    if (p.cfg.mode == CouplingMode::LearnedAnchored) {
      Rng mrng = Rng(p.cfg.seed).substream(kMomentStream);
      moments = empirical_moments(own_sampler, std::max<std::size_t>(dc.samples, 10000), mrng);
      p.note("analytic jensen arm uses moment-matched Gaussian surrogate (learned anchor)");
    } else {
      moments = analytic_moments(p.setup);
    }
    jensen_check("analytic", make_gaussian_field(std::move(moments)), dc.jensen_samples,
                 dc.jensen_steps, 0);
  }
  if (p.has_net && p.cfg.training.iterations > 0) {
    jensen_check("trained", trained_field(p), dc.jensen_trained_samples, dc.jensen_trained_steps,
                 1);
  } else {
    p.note("trained-field jensen arm skipped: no training in this run");
  }

  // ---- Transport cost across anchor choices.
  {
    std::uint64_t key = 0;
    std::vector<std::pair<std::string, CouplingSetup>> cost_arms;
    cost_arms.emplace_back("independent", with_mode(p.setup, CouplingMode::Independent));
    cost_arms.emplace_back("lq-anchored", with_mode(p.setup, CouplingMode::LqAnchored));
    cost_arms.emplace_back("oracle-anchored", with_mode(p.setup, CouplingMode::OracleAnchored));
    if (p.setup.estimator)
      cost_arms.emplace_back("learned-anchored", p.setup.mode == CouplingMode::LearnedAnchored
                                                     ? p.setup
                                                     : with_mode(p.setup, p.cfg.mode));
    std::map<std::string, Moment> costs;
    for (const auto& [name, arm_setup] : cost_arms) {
      Rng rng = Rng(p.cfg.seed).substream(kTransportStream).substream(key++);
      const Moment m =
          expected_displacement(arm_setup.sampler(), std::max<std::size_t>(dc.samples, 10000), rng);
      costs[name] = m;
      p.summary.push_back({"expected_displacement[" + name + "]", m.value, m.std_error, m.n});
    }
    const bool ordered = costs["oracle-anchored"].value < costs["lq-anchored"].value &&
                         costs["lq-anchored"].value < costs["independent"].value;
    p.note(std::string("transport-cost ordering oracle < lq < independent: ") +
           (ordered ? "holds" : "VIOLATED"));
  }

  // ---- Path crossings (1-D only).
  if (p.cfg.dim == 1) {
    CsvFile cross_csv(p.dir / "crossing.csv", "crossing_ratio", p.cfg.seed, p.hash,
                      "arm,sigma,ratio,n_pairs");
    p.record("crossing.csv");
    std::uint64_t key = 0;
    auto run_arm = [&](const std::string& name, const CouplingSetup& arm_setup, double sigma) {
      Rng rng = Rng(p.cfg.seed).substream(kCrossingStream).substream(key++);
      const PairSampler s = arm_setup.sampler();
      std::vector<std::pair<double, double>> flat(dc.crossing_pairs);
      for (auto& pr : flat) {
        const CoupledPair cp = s(rng);
        pr = {cp.z0[0], cp.z1[0]};
      }
      const double ratio = crossing_ratio(flat);
      cross_csv.row(name + "," + num17(sigma) + "," + num17(ratio) + "," +
                    std::to_string(dc.crossing_pairs));
      p.summary.push_back({"crossing_ratio[" + name + ",sigma=" + num6(sigma) + "]", ratio, 0.0,
                           dc.crossing_pairs});
    };
    run_arm("independent", with_mode(p.setup, CouplingMode::Independent), 0.0);
    const CouplingMode sweep_mode =
        indep ? CouplingMode::LqAnchored : p.cfg.mode;
    std::vector<double> sigmas{0.5, 0.2, 0.08, 0.03};
    if (std::find(sigmas.begin(), sigmas.end(), p.cfg.sigma) == sigmas.end())
      sigmas.push_back(p.cfg.sigma);
    for (double s : sigmas) {
      CouplingSetup arm_setup = with_mode(p.setup, sweep_mode);
      arm_setup.sigma = s;
      run_arm(to_string(sweep_mode), arm_setup, s);
    }
    cross_csv.close();
  }

  // ---- Straightness of trained trajectories (geometry summary).
  if (p.has_net && p.cfg.training.iterations > 0) {
    const Field field = trained_field(p);
    Rng rng = Rng(p.cfg.seed).substream(kStraightStream);
    std::vector<double> vals;
    for (std::size_t i = 0; i < 64; ++i) {
      const CoupledPair pair = own_sampler(rng);
      const Trajectory traj = integrate(field, pair.z0, pair.c, 64, DtMode::Instantaneous);
      vals.push_back(straightness(traj));
    }
    const Moment m = moment_of(vals);
    p.summary.push_back({"straightness[trained,64steps]", m.value, m.std_error, vals.size()});
  }

  // ---- Pair shard dump.
  if (dc.dump_pairs > 0) {
    CsvFile pair_csv(p.dir / "pairs.csv", "coupled_pairs", p.cfg.seed, p.hash, [&] {
      std::string cols = "idx";
      for (const char* base : {"z0", "z1", "c", "lq"})
        for (std::size_t i = 0; i < p.cfg.dim; ++i)
          cols += std::string(",") + base + "_" + std::to_string(i);
      return cols;
    }());
    Rng rng = Rng(p.cfg.seed).substream(kDatasetStream).substream(7);
    for (std::size_t i = 0; i < dc.dump_pairs; ++i) {
      const CoupledPair pair = own_sampler(rng);
      std::string line = std::to_string(i);
      for (const Vec* v : {&pair.z0, &pair.z1, &pair.c, &pair.lq})
        for (double x : *v) line += "," + num17(x);
      pair_csv.row(line);
    }
    pair_csv.close();
    p.record("pairs.csv");
  }

  // Summary CSV last so it carries every row accumulated above.
  CsvFile diag_csv(p.dir / "diagnostics.csv", "diagnostics_summary", p.cfg.seed, p.hash,
                   "quantity,estimate,std_error,n_samples,seed");
  for (const auto& row : p.summary)
    diag_csv.row(row.quantity + "," + num17(row.estimate) + "," + num17(row.std_error) + "," +
                 std::to_string(row.n_samples) + "," + std::to_string(p.cfg.seed));
  diag_csv.close();
  p.record("diagnostics.csv");
}

void stage_report(Pipeline& p) {
  std::ofstream out(p.dir / "report.txt", std::ios::trunc);
  if (!out) throw IoError("cannot write report.txt");
  out << "coupledflow experiment report\n";
  out << "=============================\n";
  out << "name: " << p.cfg.name << "\n";
  out << "seed: " << p.cfg.seed << "\n";
  out << "config_hash: " << hex64(p.hash) << "\n";
  out << "generator: " << Rng::kGeneratorName << "\n";
  out << "coupling mode: " << to_string(p.cfg.mode) << "\n";
  out << "dim: " << p.cfg.dim << ", sigma: " << num6(p.cfg.sigma)
      << ", noise_stdev: " << num6(p.cfg.degradation.noise_stdev) << "\n";
  if (p.estimator_holdout_mse)
    out << "learned estimator holdout mse: " << num6(*p.estimator_holdout_mse) << "\n";
  out << "\n";

  out << "training\n--------\n";
  if (p.cfg.training.iterations == 0) {
    out << "no training requested (0 iterations)\n";
  } else {
    out << "iterations: " << p.state.iteration << " / " << p.cfg.training.iterations << "\n";
    out << "final fm loss: " << num6(p.final_fm_loss) << "\n";
    if (p.cfg.training.shortcut)
      out << "final shortcut loss: " << num6(p.final_sc_loss) << "\n";
  }
  out << "\n";

  if (!p.endpoint_w2.empty()) {
    out << "endpoint sliced-W2 vs target samples\n------------------------------------\n";
    for (const auto& [key, value] : p.endpoint_w2)
      out << "  " << key << " steps: " << num6(value) << "\n";
    out << "\n";
  }

  auto dump_checks = [&out](const char* title, const std::vector<ReportCheck>& checks) {
    out << title << "\n";
    for (std::size_t i = 0; title[i]; ++i) out << '-';
    out << "\n";
    if (checks.empty()) out << "not evaluated in this run\n";
    for (const auto& c : checks)
      out << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.label << ": " << c.detail << "\n";
    out << "\n";
  };
  dump_checks("property 1 (velocity-variance reduction; lambda = trace of conditional covariance)",
              p.property1_checks);
  dump_checks("property 2 (kinetic energy <= expected squared displacement)", p.property2_checks);

  if (!p.notes.empty()) {
    out << "notes\n-----\n";
    for (const auto& n : p.notes) out << "  - " << n << "\n";
  }
  out.close();
  if (out.fail()) throw IoError("failed writing report.txt");
  p.record("report.txt");
}

void write_manifest(Pipeline& p, const std::string& status) {
  std::ofstream out(p.dir / "MANIFEST", std::ios::trunc);
  if (!out) throw IoError("cannot write MANIFEST");
  out << "# coupledflow manifest v1\n";
  out << "# status: " << status << "\n";
  out << "# hash: fnv1a64\n";
  for (const auto& name : p.artifacts) {
    const fs::path path = p.dir / name;
    if (!fs::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    out << hex64(fnv1a64(bytes)) << "  " << name << "\n";
  }
  out.close();
  if (out.fail()) throw IoError("failed writing MANIFEST");
}

RunOutcome run_pipeline(Pipeline& p, bool resume, bool skip_training) {
  RunOutcome outcome;
  outcome.output_dir = p.dir.string();
  std::string stage = "setup";
  try {
    stage_setup(p);
    stage = "estimator";
    stage_estimator(p);
    if (!skip_training) {
      stage = "train";
      stage_train(p, resume);
    }
    stage = "inference";
    stage_inference(p);
    stage = "diagnostics";
    stage_diagnostics(p);
    stage = "report";
    stage_report(p);
    stage = "manifest";
    write_manifest(p, "ok");
  } catch (const std::exception& e) {
    outcome.exit_code = 2;
    outcome.failure_stage = stage;
    outcome.message = e.what();
    try {
      write_manifest(p, "failed:" + stage + ": " + e.what());
    } catch (...) {
      // manifest itself unwritable; the nonzero exit already reports failure
    }
    return outcome;
  }
  outcome.message = "ok";
  return outcome;
}

TrainState state_from_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ckpt) {
  TrainState st = make_train_state(cfg.dim, cfg.network.hidden, cfg.network.time_features,
                                   cfg.training);
  if (st.net.mlp.widths != ckpt.widths)
    throw IoError("checkpoint layer widths do not match the configuration");
  st.net.mlp.params = ckpt.params;
  st.ema.params = ckpt.ema;
  st.ema.decay = cfg.training.ema_decay;
  st.opt.m = ckpt.adam_m;
  st.opt.v = ckpt.adam_v;
  st.opt.step = ckpt.adam_step;
  st.opt.learning_rate = ckpt.learning_rate;
  st.opt.beta1 = ckpt.beta1;
  st.opt.beta2 = ckpt.beta2;
  st.opt.epsilon = ckpt.epsilon;
  st.iteration = ckpt.iteration;
  return st;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.training.seed = cfg.seed;
  cfg.validate();
  Pipeline p;
  p.cfg = cfg;
  p.dir = cfg.output_dir;
  p.hash = config_hash(cfg);
  p.setup = cfg.coupling_setup();
  p.state = make_train_state(cfg.dim, cfg.network.hidden, cfg.network.time_features,
                             cfg.training);
  p.has_net = cfg.training.iterations == 0;  // untrained init is still a usable field
  return run_pipeline(p, /*resume=*/false, /*skip_training=*/false);
}

RunOutcome resume_experiment(const std::string& checkpoint_path) {
  const fs::path ckpt_path(checkpoint_path);
  const fs::path dir = ckpt_path.parent_path().empty() ? "." : ckpt_path.parent_path();
  ExperimentConfig cfg = load_config_file((dir / "config.resolved").string());
  cfg.output_dir = dir.string();
  cfg.training.seed = cfg.seed;
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.config_hash != config_hash(cfg))
    throw IoError("config hash mismatch: checkpoint " + hex64(ckpt.config_hash) +
                  " vs config " + hex64(config_hash(cfg)));
  Pipeline p;
  p.cfg = cfg;
  p.dir = dir;
  p.hash = ckpt.config_hash;
  p.setup = cfg.coupling_setup();
  p.state = state_from_checkpoint(cfg, ckpt);
  p.has_net = true;
  return run_pipeline(p, /*resume=*/true, /*skip_training=*/false);
}

RunOutcome diagnose_experiment(const std::string& checkpoint_path, const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.training.seed = cfg.seed;
  cfg.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.config_hash != config_hash(cfg))
    throw IoError("config hash mismatch: checkpoint " + hex64(ckpt.config_hash) +
                  " vs config " + hex64(config_hash(cfg)));
  Pipeline p;
  p.cfg = cfg;
  p.dir = cfg.output_dir;
  p.hash = ckpt.config_hash;
  p.setup = cfg.coupling_setup();
  p.state = state_from_checkpoint(cfg, ckpt);
  p.has_net = true;
  return run_pipeline(p, /*resume=*/false, /*skip_training=*/true);
}

RunOutcome verify_directory(const std::string& dir_in) {
  RunOutcome outcome;
  const fs::path dir(dir_in);
  outcome.output_dir = dir.string();
  std::ifstream in(dir / "MANIFEST");
  if (!in) {
    outcome.exit_code = 2;
    outcome.message = "no MANIFEST in " + dir.string();
    return outcome;
  }
  std::string line;
  std::string status;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    if (line.rfind("# status:", 0) == 0) {
      status = line.substr(9);
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto gap = line.find("  ");
    if (gap == std::string::npos || gap != 16) {
      problems.push_back("malformed manifest line: " + line);
      continue;
    }
    const std::string want = line.substr(0, gap);
    const std::string name = line.substr(gap + 2);
    std::ifstream file(dir / name, std::ios::binary);
    if (!file) {
      problems.push_back("missing artifact: " + name);
      continue;
    }
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    const std::string got = hex64(fnv1a64(bytes));
    if (got != want)
      problems.push_back("checksum mismatch for " + name + ": manifest " + want + ", file " + got);
  }
  std::ostringstream msg;
  if (!status.empty() && status.find("ok") == std::string::npos) {
    problems.push_back("manifest status:" + status);
  }
  if (problems.empty()) {
    msg << "verify ok";
    outcome.message = msg.str();
    return outcome;
  }
  for (const auto& s : problems) msg << s << "\n";
  outcome.exit_code = 2;
  outcome.message = msg.str();
  return outcome;
}

}  // namespace cflow
