#include "spinet/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "spinet/error.hpp"
#include "spinet/spin.hpp"

namespace spinet::cli {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ExperimentConfig::finalize_defaults() {
  if (experiment == "hydrogen") {
    if (iters == 0) iters = 200000;
    if (k == 0) k = 5;
    if (batch == 0) batch = 128;
    if (alpha == 0.0) alpha = 1e-5;
    if (halfwidth == 0.0) halfwidth = 50.0;
    if (hidden.empty()) hidden = "64,64,64,64";
  } else if (experiment == "sfa-video") {
    if (iters == 0) iters = 20000;
    if (k == 0) k = 4;  // non-constant features; the constant one is added
    if (batch == 0) batch = 0;  // batch is clips_per_batch * pairs per clip
    if (alpha == 0.0) alpha = 1e-6;
    if (halfwidth == 0.0) halfwidth = 50.0;
    if (hidden.empty()) hidden = "64,64";
  } else if (experiment == "tabular") {
    if (iters == 0) iters = 30000;
    if (k == 0) k = 4;
    if (batch == 0) batch = 32;
    if (alpha == 0.0) alpha = 3e-3;
    if (halfwidth == 0.0) halfwidth = 50.0;
  } else if (experiment == "baseline-grid") {
    if (k == 0) k = 9;
    // box small enough to resolve the Coulomb cusp at 64 nodes per side,
    // large enough to hold the first two excited shells
    if (halfwidth == 0.0) halfwidth = 20.0;
  } else {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
}

void ExperimentConfig::validate() const {
  const bool trains = experiment != "baseline-grid";
  if (trains) {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(beta > 0.0) || beta > 1.0)
      throw ConfigError("beta must lie in (0, 1]");
    if (!(rmsprop_decay >= 0.0) || rmsprop_decay >= 1.0)
      throw ConfigError("rmsprop_decay must lie in [0, 1)");
    spin::validate_timescales(beta, rmsprop_decay);
    if (iters == 0) throw ConfigError("iters must be positive");
    if (log_every == 0) throw ConfigError("log_every must be positive");
  }
  if (k < 1) throw ConfigError("k must be positive");
  if (experiment == "hydrogen") {
    if (batch < 1) throw ConfigError("batch must be positive");
    if (!(fd_eps > 0.0)) throw ConfigError("fd_eps must be positive");
    if (!(r_min > 0.0)) throw ConfigError("r_min must be positive");
    if (!(halfwidth > fd_eps))
      throw ConfigError("halfwidth must exceed fd_eps");
  }
  if (experiment == "sfa-video") {
    if (frame < 4) throw ConfigError("frame must be at least 4");
    if (n_balls < 1) throw ConfigError("n_balls must be positive");
    if (clip_frames < 3)
      throw ConfigError("clip_frames must be at least 3");
    if (n_clips < 1 || clips_per_batch < 1)
      throw ConfigError("clip counts must be positive");
    if (!(ball_radius > 0.0) || ball_radius >= 0.5)
      throw ConfigError("ball_radius must lie in (0, 0.5)");
  }
  if (experiment == "tabular") {
    if (n_states < 2) throw ConfigError("n_states must be at least 2");
    if (k > n_states) throw ConfigError("k cannot exceed n_states");
    if (batch < 1) throw ConfigError("batch must be positive");
  }
  if (experiment == "baseline-grid") {
    if (grid_n < 3) throw ConfigError("grid_n must be at least 3");
    if (k > grid_n * grid_n) throw ConfigError("k exceeds the grid dimension");
  }
  if (extraction != "full" && extraction != "cholesky")
    throw ConfigError("extraction must be 'full' or 'cholesky'");
}

std::vector<int> ExperimentConfig::hidden_widths() const {
  std::vector<int> widths;
  std::stringstream ss(hidden);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      widths.push_back(std::stoi(tok));
    } catch (...) {
      throw ConfigError("bad hidden width '" + tok + "'");
    }
    if (widths.back() < 1) throw ConfigError("hidden widths must be positive");
  }
  if (widths.empty()) throw ConfigError("hidden layer list is empty");
  return widths;
}

namespace {

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    return std::stoi(v);
  } catch (...) {
    throw ConfigError("bad integer for " + key + ": '" + v + "'");
  }
}

double parse_real(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    throw ConfigError("bad real for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                       const std::string& value) {
  if (key == "experiment") cfg.experiment = value;
  else if (key == "seed") cfg.seed = parse_u64(value, key);
  else if (key == "iters") cfg.iters = parse_u64(value, key);
  else if (key == "k") cfg.k = parse_int(value, key);
  else if (key == "batch") cfg.batch = parse_int(value, key);
  else if (key == "alpha") cfg.alpha = parse_real(value, key);
  else if (key == "beta") cfg.beta = parse_real(value, key);
  else if (key == "rmsprop_decay") cfg.rmsprop_decay = parse_real(value, key);
  else if (key == "rmsprop_epsilon") cfg.rmsprop_epsilon = parse_real(value, key);
  else if (key == "robbins_monro") cfg.robbins_monro = parse_bool(value, key);
  else if (key == "log_every") cfg.log_every = parse_u64(value, key);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_u64(value, key);
  else if (key == "extraction") cfg.extraction = value;
  else if (key == "halfwidth") cfg.halfwidth = parse_real(value, key);
  else if (key == "fd_eps") cfg.fd_eps = parse_real(value, key);
  else if (key == "r_min") cfg.r_min = parse_real(value, key);
  else if (key == "hidden") cfg.hidden = value;
  else if (key == "block_sparse") cfg.block_sparse = parse_bool(value, key);
  else if (key == "heatmap_n") cfg.heatmap_n = parse_int(value, key);
  else if (key == "grid_n") cfg.grid_n = parse_int(value, key);
  else if (key == "potential_file") cfg.potential_file = value;
  else if (key == "frame") cfg.frame = parse_int(value, key);
  else if (key == "n_balls") cfg.n_balls = parse_int(value, key);
  else if (key == "ball_radius") cfg.ball_radius = parse_real(value, key);
  else if (key == "ball_speed") cfg.ball_speed = parse_real(value, key);
  else if (key == "n_clips") cfg.n_clips = parse_int(value, key);
  else if (key == "clip_frames") cfg.clip_frames = parse_int(value, key);
  else if (key == "clips_per_batch") cfg.clips_per_batch = parse_int(value, key);
  else if (key == "n_states") cfg.n_states = parse_int(value, key);
  else if (key == "negate") cfg.negate = parse_bool(value, key);
  else if (key == "exact_population") cfg.exact_population = parse_bool(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config " + path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    apply_config_line(cfg, trim(line.substr(0, eq)),
                      trim(line.substr(eq + 1)));
  }
}

std::string resolved_config(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["experiment"] = cfg.experiment;
  kv["seed"] = std::to_string(cfg.seed);
  kv["iters"] = std::to_string(cfg.iters);
  kv["k"] = std::to_string(cfg.k);
  kv["batch"] = std::to_string(cfg.batch);
  kv["alpha"] = format_double(cfg.alpha);
  kv["beta"] = format_double(cfg.beta);
  kv["rmsprop_decay"] = format_double(cfg.rmsprop_decay);
  kv["rmsprop_epsilon"] = format_double(cfg.rmsprop_epsilon);
  kv["robbins_monro"] = cfg.robbins_monro ? "1" : "0";
  kv["log_every"] = std::to_string(cfg.log_every);
  kv["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  kv["extraction"] = cfg.extraction;
  kv["halfwidth"] = format_double(cfg.halfwidth);
  kv["fd_eps"] = format_double(cfg.fd_eps);
  kv["r_min"] = format_double(cfg.r_min);
  kv["hidden"] = cfg.hidden.empty() ? "64,64" : cfg.hidden;
  kv["block_sparse"] = cfg.block_sparse ? "1" : "0";
  kv["heatmap_n"] = std::to_string(cfg.heatmap_n);
  kv["grid_n"] = std::to_string(cfg.grid_n);
  if (!cfg.potential_file.empty()) kv["potential_file"] = cfg.potential_file;
  kv["frame"] = std::to_string(cfg.frame);
  kv["n_balls"] = std::to_string(cfg.n_balls);
  kv["ball_radius"] = format_double(cfg.ball_radius);
  kv["ball_speed"] = format_double(cfg.ball_speed);
  kv["n_clips"] = std::to_string(cfg.n_clips);
  kv["clip_frames"] = std::to_string(cfg.clip_frames);
  kv["clips_per_batch"] = std::to_string(cfg.clips_per_batch);
  kv["n_states"] = std::to_string(cfg.n_states);
  kv["negate"] = cfg.negate ? "1" : "0";
  kv["exact_population"] = cfg.exact_population ? "1" : "0";

  std::string out = "# resolved configuration\n";
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

}  // namespace spinet::cli
