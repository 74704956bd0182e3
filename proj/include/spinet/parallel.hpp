#ifndef SPINET_PARALLEL_HPP
#define SPINET_PARALLEL_HPP

#include <cstddef>

namespace spinet::parallel {

// Worker cap for the OpenMP kernels. Resolved once from SPINET_THREADS (and
// the OpenMP default) on first use; set_max_threads overrides it.
int max_threads();
void set_max_threads(int n);

// Forces every kernel through its serial reference path. Used by tests and
// the benchmark tool.
bool serial_forced();
void force_serial(bool on);

}  // namespace spinet::parallel

#endif  // SPINET_PARALLEL_HPP
