#ifndef SPINET_CONFIG_HPP
#define SPINET_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace spinet::cli {

// Flat key = value experiment configuration. Precedence: built-in defaults,
// then the config file, then command-line flags.
struct ExperimentConfig {
  std::string experiment;  // hydrogen | sfa-video | tabular | baseline-grid

  // training
  std::uint64_t seed = 1;
  std::uint64_t iters = 0;  // 0 means "use the experiment default"
  int k = 0;                // 0 means "use the experiment default"
  int batch = 0;
  double alpha = 0.0;
  double beta = 0.01;
  double rmsprop_decay = 0.999;
  double rmsprop_epsilon = 1e-10;
  bool robbins_monro = false;
  std::uint64_t log_every = 1;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::string extraction = "full";     // full | cholesky

  // hydrogen / baseline-grid domain
  double halfwidth = 0.0;  // 0 means "use the experiment default"
  double fd_eps = 0.1;
  double r_min = 1e-3;
  std::string hidden;  // comma-separated layer widths
  bool block_sparse = true;
  int heatmap_n = 64;
  int grid_n = 64;
  std::string potential_file;  // optional custom potential grid

  // sfa-video
  int frame = 16;
  int n_balls = 1;
  double ball_radius = 0.15;
  double ball_speed = 0.05;
  int n_clips = 32;
  int clip_frames = 10;
  int clips_per_batch = 8;

  // tabular
  int n_states = 20;
  bool negate = false;
  bool exact_population = false;

  // invocation parameters (not part of config.resolved)
  std::string out_dir;
  std::string resume;

  // Applies per-experiment defaults to every field left at its sentinel.
  void finalize_defaults();
  // Throws ConfigError on out-of-range values or timescale violations.
  void validate() const;

  std::vector<int> hidden_widths() const;
};

// Parses `key = value` lines ('#' comments) into `cfg`, overwriting only the
// keys present in the file. Unknown keys raise ConfigError.
void apply_config_file(ExperimentConfig& cfg, const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                       const std::string& value);

// Serializes every experiment key (sorted) so a run can be reproduced.
std::string resolved_config(const ExperimentConfig& cfg);

// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

}  // namespace spinet::cli

#endif  // SPINET_CONFIG_HPP
