// Times the serial reference kernels against the OpenMP ones and checks that
// both produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "spinet/baseline.hpp"
#include "spinet/kernels.hpp"
#include "spinet/operators.hpp"
#include "spinet/parallel.hpp"
#include "spinet/rng.hpp"

using namespace spinet;

namespace {

DenseMatrix random_matrix(int r, int c, std::mt19937_64& eng) {
  DenseMatrix m(r, c);
  for (size_t i = 0; i < m.size(); ++i) m.data()[i] = uniform_in(eng, -1.0, 1.0);
  return m;
}

template <typename F>
double time_best_ms(F&& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

bool bits_equal(const DenseMatrix& a, const DenseMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_ms, double omp_ms, bool identical) {
  std::printf("%-22s %10.3f ms %10.3f ms %8.2fx   %s\n", name, serial_ms,
              omp_ms, serial_ms / omp_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::mt19937_64 eng(20240901);
  std::printf("threads: %d\n", parallel::max_threads());
  std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  {
    DenseMatrix a = random_matrix(384, 256, eng);
    DenseMatrix b = random_matrix(256, 256, eng);
    DenseMatrix rs, rp;
    const double ts = time_best_ms([&] { rs = kernels::serial::matmul(a, b); }, 5);
    const double tp = time_best_ms([&] { rp = kernels::omp::matmul(a, b); }, 5);
    report("matmul 384x256x256", ts, tp, bits_equal(rs, rp));
  }
  {
    DenseMatrix a = random_matrix(4096, 64, eng);
    DenseMatrix b = random_matrix(4096, 64, eng);
    DenseMatrix rs, rp;
    const double ts =
        time_best_ms([&] { rs = kernels::serial::matmul_tn(a, b, 1.0 / 4096); }, 5);
    const double tp =
        time_best_ms([&] { rp = kernels::omp::matmul_tn(a, b, 1.0 / 4096); }, 5);
    report("covariance 4096x64", ts, tp, bits_equal(rs, rp));
  }
  {
    DenseMatrix x = random_matrix(640, 64, eng);
    DenseMatrix w = random_matrix(64, 64, eng);
    std::vector<double> bias(64, 0.1);
    DenseMatrix rs, rp;
    const double ts =
        time_best_ms([&] { rs = kernels::serial::affine(x, w, bias); }, 20);
    const double tp =
        time_best_ms([&] { rp = kernels::omp::affine(x, w, bias); }, 20);
    report("affine 640x64x64", ts, tp, bits_equal(rs, rp));
  }
  {
    DenseMatrix z = random_matrix(640, 256, eng);
    DenseMatrix rs, rp;
    const double ts = time_best_ms([&] { rs = kernels::serial::softplus(z); }, 20);
    const double tp = time_best_ms([&] { rp = kernels::omp::softplus(z); }, 20);
    report("softplus 640x256", ts, tp, bits_equal(rs, rp));
  }
  {
    auto ham = baseline::grid_hamiltonian_build(
        64, 50.0, operators::Potential::coulomb(1e-3));
    auto csr = baseline::Csr::from_upper(ham);
    std::vector<double> x(csr.dim), ys(csr.dim), yp(csr.dim);
    for (double& v : x) v = uniform_in(eng, -1.0, 1.0);
    const double ts = time_best_ms(
        [&] { kernels::serial::csr_matvec(csr.dim, csr.row_ptr, csr.col, csr.val, x, ys); },
        50);
    const double tp = time_best_ms(
        [&] { kernels::omp::csr_matvec(csr.dim, csr.row_ptr, csr.col, csr.val, x, yp); },
        50);
    report("csr_matvec 4096", ts, tp,
           std::memcmp(ys.data(), yp.data(), ys.size() * 8) == 0);
  }
  {
    std::vector<double> centers = {0.3, 0.4, 0.7, 0.6, 0.5, 0.2};
    std::vector<float> fs(256 * 256), fp(256 * 256);
    const double ts = time_best_ms(
        [&] { kernels::serial::render_discs(256, 256, centers, 0.12, fs); }, 10);
    const double tp = time_best_ms(
        [&] { kernels::omp::render_discs(256, 256, centers, 0.12, fp); }, 10);
    report("render 256x256x3", ts, tp,
           std::memcmp(fs.data(), fp.data(), fs.size() * 4) == 0);
  }
  return 0;
}
