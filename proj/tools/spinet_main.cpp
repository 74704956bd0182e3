#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinet/error.hpp"
#include "spinet/experiments.hpp"

using spinet::cli::ExperimentConfig;

int main(int argc, char** argv) {
  CLI::App app{"spinet - spectral inference networks experiment runner"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out;
    std::string resume;
    std::uint64_t seed = 0;
    std::uint64_t iters = 0;
    std::vector<std::string> overrides;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* iters_opt = nullptr;
  };

  const std::vector<std::string> experiments = {"hydrogen", "sfa-video",
                                                "tabular", "baseline-grid"};
  std::vector<Flags> flags(experiments.size());
  for (size_t i = 0; i < experiments.size(); ++i) {
    CLI::App* sub = app.add_subcommand(
        experiments[i], "run the " + experiments[i] + " experiment");
    Flags& f = flags[i];
    sub->add_option("--config", f.config, "key = value configuration file");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--resume", f.resume, "checkpoint to resume from");
    f.seed_opt = sub->add_option("--seed", f.seed, "RNG seed");
    f.iters_opt = sub->add_option("--iters", f.iters, "iteration budget");
    sub->add_option("--set", f.overrides,
                    "extra key=value overrides (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < experiments.size(); ++i) {
    if (!app.got_subcommand(experiments[i])) continue;
    const Flags& f = flags[i];
    ExperimentConfig cfg;
    cfg.experiment = experiments[i];
    try {
      if (!f.config.empty()) spinet::cli::apply_config_file(cfg, f.config);
      // the subcommand always names the experiment, even under --config
      cfg.experiment = experiments[i];
      if (f.seed_opt->count() > 0) cfg.seed = f.seed;
      if (f.iters_opt->count() > 0) cfg.iters = f.iters;
      if (!f.out.empty()) cfg.out_dir = f.out;
      if (!f.resume.empty()) cfg.resume = f.resume;
      for (const std::string& kv : f.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
          throw spinet::ConfigError("--set expects key=value, got '" + kv + "'");
        spinet::cli::apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
    } catch (const spinet::ConfigError& e) {
      fprintf(stderr, "config error: %s\n", e.what());
      return 2;
    }
    return spinet::cli::run_experiment(std::move(cfg));
  }
  return 2;
}
