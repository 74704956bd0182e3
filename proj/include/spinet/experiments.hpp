#ifndef SPINET_EXPERIMENTS_HPP
#define SPINET_EXPERIMENTS_HPP

#include "spinet/config.hpp"

namespace spinet::cli {

// Runs one experiment to completion, writing config.resolved, log.csv,
// checkpoints, eigenvalues.csv and the per-experiment artifacts into the
// output directory. Returns the process exit code: 0 on success, 2 on
// configuration errors, 3 on numerical failures, 1 otherwise.
int run_experiment(ExperimentConfig cfg);

}  // namespace spinet::cli

#endif  // SPINET_EXPERIMENTS_HPP
