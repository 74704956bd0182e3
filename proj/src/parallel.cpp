#include "spinet/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spinet::parallel {

namespace {

int resolve_default() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("SPINET_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1 && cap < n) n = static_cast<int>(cap);
  }
  return n < 1 ? 1 : n;
}

std::atomic<int> g_max_threads{0};
std::atomic<bool> g_serial{false};

}  // namespace

int max_threads() {
  int n = g_max_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_default();
    g_max_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_max_threads(int n) {
  g_max_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

bool serial_forced() { return g_serial.load(std::memory_order_relaxed); }

void force_serial(bool on) { g_serial.store(on, std::memory_order_relaxed); }

}  // namespace spinet::parallel
