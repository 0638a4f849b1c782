#include "cflow/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cflow {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ParseError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, std::size_t line) {
  double out = 0.0;
  const char* begin = v.data();
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) fail(line, "expected a real number, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v, std::size_t line) {
  std::uint64_t out = 0;
  const char* begin = v.data();
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) fail(line, "expected an unsigned integer, got '" + v + "'");
  return out;
}

std::size_t parse_size(const std::string& v, std::size_t line) {
  return std::size_t(parse_u64(v, line));
}

bool parse_bool(const std::string& v, std::size_t line) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_ws(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream iss(v);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

Vec parse_vec(const std::string& v, std::size_t line) {
  Vec out;
  for (const auto& tok : split_ws(v)) out.push_back(parse_double(tok, line));
  if (out.empty()) fail(line, "expected at least one number");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& v, std::size_t line,
                                         bool allow_empty = false) {
  std::vector<std::size_t> out;
  for (const auto& tok : split_ws(v)) out.push_back(parse_size(tok, line));
  if (out.empty() && !allow_empty) fail(line, "expected at least one integer");
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_vec(const Vec& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt_double(v[i]);
  }
  return out;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

void require_dim(const Vec& v, std::size_t dim, std::size_t line, const std::string& what) {
  if (v.size() != dim)
    fail(line, what + " has " + std::to_string(v.size()) + " entries, expected " +
                   std::to_string(dim));
}

void require_positive(double v, std::size_t line, const std::string& what) {
  if (!(v > 0.0)) fail(line, what + " must be positive");
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(std::size_t dim) {
  ExperimentConfig cfg;
  cfg.dim = dim;
  if (dim == 2) {
    cfg.source.mean = {0.0, 0.0};
    cfg.prior.mean = {1.0, -1.0};
    cfg.degradation.op = Mat(2, 2, {0.6, 0.2, 0.0, 0.6});
  } else {
    cfg.source.mean = zeros(dim);
    cfg.prior.mean = zeros(dim);
    cfg.degradation.op = Mat::identity(dim);
  }
  cfg.source.stdev = 1.0;
  cfg.prior.stdev = 1.0;
  cfg.degradation.noise_stdev = 0.2;
  cfg.training.seed = cfg.seed;
  return cfg;
}

void ExperimentConfig::validate() const {
  if (dim == 0) throw ConfigError("config: dim must be positive");
  source.validate();
  prior.validate();
  degradation.validate();
  if (source.dim() != dim || prior.dim() != dim || degradation.dim() != dim)
    throw ConfigError("config: distribution dimensions do not match dim");
  if (!(sigma > 0.0)) throw ConfigError("config: sigma must be positive");
  training.validate();
  if (network.time_features < 2 || network.time_features % 2 != 0)
    throw ConfigError("config: time_features must be even and >= 2");
  if (inference.step_counts.empty()) throw ConfigError("config: empty step_counts");
  for (std::size_t s : inference.step_counts)
    if (s == 0) throw ConfigError("config: step counts must be >= 1");
  if (inference.instantaneous_reference == 0)
    throw ConfigError("config: instantaneous_reference must be >= 1");
  if (inference.w2_folds < 2) throw ConfigError("config: w2_folds must be >= 2");
  if (!(diagnostics.bandwidth_factor > 0.0))
    throw ConfigError("config: bandwidth_factor must be positive");
  for (double t : diagnostics.variance_times)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("config: variance_times must lie in (0,1)");
  if (estimator_dataset < 100 * dim)
    throw ConfigError("config: estimator dataset_size must be >= 100 * dim");
}

CouplingSetup ExperimentConfig::coupling_setup() const {
  CouplingSetup setup;
  setup.dim = dim;
  setup.source = source;
  setup.prior = prior;
  setup.model = degradation;
  setup.sigma = sigma;
  setup.mode = mode;
  return setup;
}

ExperimentConfig parse_config(const std::string& text) {
  struct Entry {
    std::string value;
    std::size_t line;
  };
  std::map<std::string, Entry> entries;

  std::istringstream stream(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* kSections[] = {"experiment", "space",    "source",   "prior",
                                        "degradation", "coupling", "estimator", "network",
                                        "training",    "inference", "diagnostics"};
      bool known = false;
      for (const char* s : kSections) known = known || section == s;
      if (!known) fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail(line_no, "key outside any [section]");
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "empty value for key '" + key + "'");
    const std::string full = section + "." + key;
    if (entries.count(full)) fail(line_no, "duplicate key '" + full + "'");
    entries[full] = {value, line_no};
  }

  std::size_t dim = 2;
  if (auto it = entries.find("space.dim"); it != entries.end()) {
    dim = parse_size(it->second.value, it->second.line);
    if (dim == 0) fail(it->second.line, "dim must be positive");
  }
  ExperimentConfig cfg = ExperimentConfig::defaults(dim);

  for (const auto& [full, entry] : entries) {
    const std::string& v = entry.value;
    const std::size_t ln = entry.line;
    if (full == "space.dim") {
      // consumed above
    } else if (full == "experiment.format_version") {
      cfg.format_version = std::uint32_t(parse_u64(v, ln));
      if (cfg.format_version != 1) fail(ln, "unsupported format_version");
    } else if (full == "experiment.name") {
      cfg.name = v;
    } else if (full == "experiment.seed") {
      cfg.seed = parse_u64(v, ln);
    } else if (full == "experiment.output_dir") {
      cfg.output_dir = v;
    } else if (full == "source.mean") {
      cfg.source.mean = parse_vec(v, ln);
      require_dim(cfg.source.mean, dim, ln, "source.mean");
    } else if (full == "source.stdev") {
      cfg.source.stdev = parse_double(v, ln);
      require_positive(cfg.source.stdev, ln, "source.stdev");
    } else if (full == "prior.mean") {
      cfg.prior.mean = parse_vec(v, ln);
      require_dim(cfg.prior.mean, dim, ln, "prior.mean");
    } else if (full == "prior.stdev") {
      cfg.prior.stdev = parse_double(v, ln);
      require_positive(cfg.prior.stdev, ln, "prior.stdev");
    } else if (full == "degradation.matrix") {
      const Vec flat = parse_vec(v, ln);
      if (flat.size() != dim * dim)
        fail(ln, "degradation.matrix needs dim*dim = " + std::to_string(dim * dim) + " entries");
      cfg.degradation.op = Mat(dim, dim, flat);
    } else if (full == "degradation.noise_stdev") {
      cfg.degradation.noise_stdev = parse_double(v, ln);
      require_positive(cfg.degradation.noise_stdev, ln, "degradation.noise_stdev");
    } else if (full == "coupling.mode") {
      try {
        cfg.mode = coupling_mode_from_string(v);
      } catch (const ParseError& e) {
        fail(ln, e.what());
      }
    } else if (full == "coupling.sigma") {
      cfg.sigma = parse_double(v, ln);
      require_positive(cfg.sigma, ln, "coupling.sigma");
    } else if (full == "estimator.hidden") {
      cfg.estimator.hidden = parse_size_list(v, ln);
    } else if (full == "estimator.dataset_size") {
      cfg.estimator_dataset = parse_size(v, ln);
    } else if (full == "estimator.iterations") {
      cfg.estimator.iterations = parse_size(v, ln);
    } else if (full == "estimator.batch_size") {
      cfg.estimator.batch_size = parse_size(v, ln);
      if (cfg.estimator.batch_size == 0) fail(ln, "estimator.batch_size must be positive");
    } else if (full == "estimator.learning_rate") {
      cfg.estimator.learning_rate = parse_double(v, ln);
      require_positive(cfg.estimator.learning_rate, ln, "estimator.learning_rate");
    } else if (full == "estimator.holdout_fraction") {
      cfg.estimator.holdout_fraction = parse_double(v, ln);
      if (!(cfg.estimator.holdout_fraction > 0.0 && cfg.estimator.holdout_fraction < 1.0))
        fail(ln, "estimator.holdout_fraction must be in (0,1)");
    } else if (full == "network.hidden") {
      cfg.network.hidden = parse_size_list(v, ln);
    } else if (full == "network.time_features") {
      cfg.network.time_features = parse_size(v, ln);
      if (cfg.network.time_features < 2 || cfg.network.time_features % 2 != 0)
        fail(ln, "network.time_features must be even and >= 2");
    } else if (full == "training.iterations") {
      cfg.training.iterations = parse_size(v, ln);
    } else if (full == "training.batch_size") {
      cfg.training.batch_size = parse_size(v, ln);
      if (cfg.training.batch_size == 0) fail(ln, "training.batch_size must be positive");
    } else if (full == "training.learning_rate") {
      cfg.training.learning_rate = parse_double(v, ln);
      require_positive(cfg.training.learning_rate, ln, "training.learning_rate");
    } else if (full == "training.fm_fraction") {
      cfg.training.fm_fraction = parse_double(v, ln);
      if (!(cfg.training.fm_fraction > 0.0 && cfg.training.fm_fraction < 1.0))
        fail(ln, "training.fm_fraction must be in (0,1)");
    } else if (full == "training.ema_decay") {
      cfg.training.ema_decay = parse_double(v, ln);
      if (!(cfg.training.ema_decay >= 0.0 && cfg.training.ema_decay < 1.0))
        fail(ln, "training.ema_decay must be in [0,1)");
    } else if (full == "training.dt_grid_depth") {
      cfg.training.dt_grid_depth = parse_size(v, ln);
      if (cfg.training.dt_grid_depth < 1) fail(ln, "training.dt_grid_depth must be >= 1");
    } else if (full == "training.shortcut") {
      cfg.training.shortcut = parse_bool(v, ln);
    } else if (full == "training.conditioning") {
      cfg.training.conditioning = parse_bool(v, ln);
    } else if (full == "training.adam_beta1") {
      cfg.training.adam_beta1 = parse_double(v, ln);
    } else if (full == "training.adam_beta2") {
      cfg.training.adam_beta2 = parse_double(v, ln);
    } else if (full == "training.adam_epsilon") {
      cfg.training.adam_epsilon = parse_double(v, ln);
      require_positive(cfg.training.adam_epsilon, ln, "training.adam_epsilon");
    } else if (full == "training.checkpoint_every") {
      cfg.checkpoint_every = parse_size(v, ln);
    } else if (full == "inference.step_counts") {
      cfg.inference.step_counts = parse_size_list(v, ln);
    } else if (full == "inference.instantaneous_reference") {
      cfg.inference.instantaneous_reference = parse_size(v, ln);
    } else if (full == "inference.restorations") {
      cfg.inference.restorations = parse_size(v, ln);
    } else if (full == "inference.use_ema") {
      cfg.inference.use_ema = parse_bool(v, ln);
    } else if (full == "inference.dump_trajectories") {
      cfg.inference.dump_trajectories = parse_size(v, ln);
    } else if (full == "inference.w2_projections") {
      cfg.inference.w2_projections = parse_size(v, ln);
    } else if (full == "inference.w2_folds") {
      cfg.inference.w2_folds = parse_size(v, ln);
    } else if (full == "diagnostics.enabled") {
      cfg.diagnostics.enabled = parse_bool(v, ln);
    } else if (full == "diagnostics.samples") {
      cfg.diagnostics.samples = parse_size(v, ln);
    } else if (full == "diagnostics.bandwidth_factor") {
      cfg.diagnostics.bandwidth_factor = parse_double(v, ln);
      require_positive(cfg.diagnostics.bandwidth_factor, ln, "diagnostics.bandwidth_factor");
    } else if (full == "diagnostics.variance_times") {
      cfg.diagnostics.variance_times = parse_vec(v, ln);
      for (double t : cfg.diagnostics.variance_times)
        if (!(t > 0.0 && t < 1.0)) fail(ln, "variance_times must lie in (0,1)");
    } else if (full == "diagnostics.grid_bins") {
      cfg.diagnostics.grid_bins = parse_size(v, ln);
      if (cfg.diagnostics.grid_bins == 0) fail(ln, "grid_bins must be >= 1");
    } else if (full == "diagnostics.grid_extent") {
      cfg.diagnostics.grid_extent = parse_double(v, ln);
      require_positive(cfg.diagnostics.grid_extent, ln, "diagnostics.grid_extent");
    } else if (full == "diagnostics.jensen_samples") {
      cfg.diagnostics.jensen_samples = parse_size(v, ln);
    } else if (full == "diagnostics.jensen_steps") {
      cfg.diagnostics.jensen_steps = parse_size(v, ln);
    } else if (full == "diagnostics.jensen_trained_samples") {
      cfg.diagnostics.jensen_trained_samples = parse_size(v, ln);
    } else if (full == "diagnostics.jensen_trained_steps") {
      cfg.diagnostics.jensen_trained_steps = parse_size(v, ln);
    } else if (full == "diagnostics.crossing_pairs") {
      cfg.diagnostics.crossing_pairs = parse_size(v, ln);
    } else if (full == "diagnostics.dump_pairs") {
      cfg.diagnostics.dump_pairs = parse_size(v, ln);
    } else {
      fail(ln, "unknown key '" + full + "'");
    }
  }

  cfg.training.seed = cfg.seed;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

std::string serialize_impl(const ExperimentConfig& cfg, bool include_output_dir) {
  std::string out;
  auto kv = [&out](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  out += "[experiment]\n";
  kv("format_version", std::to_string(cfg.format_version));
  kv("name", cfg.name);
  kv("seed", std::to_string(cfg.seed));
  if (include_output_dir) kv("output_dir", cfg.output_dir);
  out += "\n[space]\n";
  kv("dim", std::to_string(cfg.dim));
  out += "\n[source]\n";
  kv("mean", fmt_vec(cfg.source.mean));
  kv("stdev", fmt_double(cfg.source.stdev));
  out += "\n[prior]\n";
  kv("mean", fmt_vec(cfg.prior.mean));
  kv("stdev", fmt_double(cfg.prior.stdev));
  out += "\n[degradation]\n";
  kv("matrix", fmt_vec(cfg.degradation.op.a));
  kv("noise_stdev", fmt_double(cfg.degradation.noise_stdev));
  out += "\n[coupling]\n";
  kv("mode", to_string(cfg.mode));
  kv("sigma", fmt_double(cfg.sigma));
  out += "\n[estimator]\n";
  kv("hidden", fmt_size_list(cfg.estimator.hidden));
  kv("dataset_size", std::to_string(cfg.estimator_dataset));
  kv("iterations", std::to_string(cfg.estimator.iterations));
  kv("batch_size", std::to_string(cfg.estimator.batch_size));
  kv("learning_rate", fmt_double(cfg.estimator.learning_rate));
  kv("holdout_fraction", fmt_double(cfg.estimator.holdout_fraction));
  out += "\n[network]\n";
  kv("hidden", fmt_size_list(cfg.network.hidden));
  kv("time_features", std::to_string(cfg.network.time_features));
  out += "\n[training]\n";
  kv("iterations", std::to_string(cfg.training.iterations));
  kv("batch_size", std::to_string(cfg.training.batch_size));
  kv("learning_rate", fmt_double(cfg.training.learning_rate));
  kv("fm_fraction", fmt_double(cfg.training.fm_fraction));
  kv("ema_decay", fmt_double(cfg.training.ema_decay));
  kv("dt_grid_depth", std::to_string(cfg.training.dt_grid_depth));
  kv("shortcut", fmt_bool(cfg.training.shortcut));
  kv("conditioning", fmt_bool(cfg.training.conditioning));
  kv("adam_beta1", fmt_double(cfg.training.adam_beta1));
  kv("adam_beta2", fmt_double(cfg.training.adam_beta2));
  kv("adam_epsilon", fmt_double(cfg.training.adam_epsilon));
  kv("checkpoint_every", std::to_string(cfg.checkpoint_every));
  out += "\n[inference]\n";
  kv("step_counts", fmt_size_list(cfg.inference.step_counts));
  kv("instantaneous_reference", std::to_string(cfg.inference.instantaneous_reference));
  kv("restorations", std::to_string(cfg.inference.restorations));
  kv("use_ema", fmt_bool(cfg.inference.use_ema));
  kv("dump_trajectories", std::to_string(cfg.inference.dump_trajectories));
  kv("w2_projections", std::to_string(cfg.inference.w2_projections));
  kv("w2_folds", std::to_string(cfg.inference.w2_folds));
  out += "\n[diagnostics]\n";
  kv("enabled", fmt_bool(cfg.diagnostics.enabled));
  kv("samples", std::to_string(cfg.diagnostics.samples));
  kv("bandwidth_factor", fmt_double(cfg.diagnostics.bandwidth_factor));
  kv("variance_times", fmt_vec(cfg.diagnostics.variance_times));
  kv("grid_bins", std::to_string(cfg.diagnostics.grid_bins));
  kv("grid_extent", fmt_double(cfg.diagnostics.grid_extent));
  kv("jensen_samples", std::to_string(cfg.diagnostics.jensen_samples));
  kv("jensen_steps", std::to_string(cfg.diagnostics.jensen_steps));
  kv("jensen_trained_samples", std::to_string(cfg.diagnostics.jensen_trained_samples));
  kv("jensen_trained_steps", std::to_string(cfg.diagnostics.jensen_trained_steps));
  kv("crossing_pairs", std::to_string(cfg.diagnostics.crossing_pairs));
  kv("dump_pairs", std::to_string(cfg.diagnostics.dump_pairs));
  return out;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) { return serialize_impl(cfg, true); }

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(serialize_impl(cfg, false));
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace cflow
