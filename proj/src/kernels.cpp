#include "spinet/kernels.hpp"

#include <cmath>

#include "spinet/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spinet::kernels {

double softplus_scalar(double x) {
  // log(1 + exp(x)); switches branch at 30 to avoid exp overflow.
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

inline void matmul_row(const DenseMatrix& a, const DenseMatrix& b,
                       DenseMatrix& c, int i) {
  const int kk = a.cols();
  const int n = b.cols();
  double* crow = c.row(i);
  const double* arow = a.row(i);
  for (int k = 0; k < kk; ++k) {
    const double aik = arow[k];
    const double* brow = b.row(k);
    for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
  }
}

inline void matmul_tn_row(const DenseMatrix& a, const DenseMatrix& b,
                          double scale, DenseMatrix& c, int i) {
  const int bb = a.rows();
  const int n = b.cols();
  const int ca = a.cols();
  double* crow = c.row(i);
  for (int r = 0; r < bb; ++r) {
    const double ari = a.data()[static_cast<size_t>(r) * ca + i];
    const double* brow = b.row(r);
    for (int j = 0; j < n; ++j) crow[j] += ari * brow[j];
  }
  for (int j = 0; j < n; ++j) crow[j] *= scale;
}

inline void affine_row(const DenseMatrix& x, const DenseMatrix& w,
                       std::span<const double> bias, DenseMatrix& y, int r) {
  const int m = x.cols();
  const int n = w.rows();
  const double* xrow = x.row(r);
  double* yrow = y.row(r);
  for (int o = 0; o < n; ++o) {
    const double* wrow = w.row(o);
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += xrow[k] * wrow[k];
    yrow[o] = s + bias[o];
  }
}

inline void softplus_sig_scalar(double x, double& act, double& sig) {
  if (x <= 30.0) {
    const double e = std::exp(x);
    act = std::log1p(e);
    sig = e / (1.0 + e);
  } else {
    const double em = std::exp(-x);
    act = x + std::log1p(em);
    sig = 1.0 / (1.0 + em);
  }
}

inline void csr_row(std::span<const int> row_ptr, std::span<const int> col,
                    std::span<const double> val, std::span<const double> x,
                    std::span<double> y, int i) {
  double s = 0.0;
  for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) s += val[p] * x[col[p]];
  y[i] = s;
}

inline float disc_pixel(int height, int width, std::span<const double> centers,
                        double radius, int px, int py) {
  // 4x4 subpixel area sampling against every disc.
  const double r2 = radius * radius;
  const double inv_w = 1.0 / width;
  const double inv_h = 1.0 / height;
  const size_t n_balls = centers.size() / 2;
  int inside = 0;
  for (int sy = 0; sy < 4; ++sy) {
    const double y = (py + (sy + 0.5) / 4.0) * inv_h;
    for (int sx = 0; sx < 4; ++sx) {
      const double x = (px + (sx + 0.5) / 4.0) * inv_w;
      bool hit = false;
      for (size_t b = 0; b < n_balls && !hit; ++b) {
        const double dx = x - centers[2 * b];
        const double dy = y - centers[2 * b + 1];
        hit = dx * dx + dy * dy <= r2;
      }
      if (hit) ++inside;
    }
  }
  return static_cast<float>(inside) / 16.0f;
}

constexpr std::int64_t kSmallWork = 1 << 14;

inline bool go_parallel(std::int64_t work) {
  return !parallel::serial_forced() && parallel::max_threads() > 1 &&
         work >= kSmallWork;
}

}  // namespace

namespace serial {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale) {
  require(a.rows() == b.rows(), "matmul_tn: batch dimensions differ");
  DenseMatrix c(a.cols(), b.cols());
  for (int i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, scale, c, i);
  return c;
}

DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias) {
  require(x.cols() == w.cols(), "affine: input width does not match weights");
  require(static_cast<int>(bias.size()) == w.rows(), "affine: bias size");
  DenseMatrix y(x.rows(), w.rows());
  for (int r = 0; r < x.rows(); ++r) affine_row(x, w, bias, y, r);
  return y;
}

DenseMatrix softplus(const DenseMatrix& z) {
  DenseMatrix a(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = a.data();
  for (size_t i = 0; i < z.size(); ++i) dst[i] = softplus_scalar(src[i]);
  return a;
}

DenseMatrix sigmoid(const DenseMatrix& z) {
  DenseMatrix a(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = a.data();
  for (size_t i = 0; i < z.size(); ++i) dst[i] = sigmoid_scalar(src[i]);
  return a;
}

void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig) {
  act = DenseMatrix(z.rows(), z.cols());
  sig = DenseMatrix(z.rows(), z.cols());
  const double* src = z.data();
  double* a = act.data();
  double* s = sig.data();
  for (size_t i = 0; i < z.size(); ++i) softplus_sig_scalar(src[i], a[i], s[i]);
}

void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y) {
  for (int i = 0; i < n; ++i) csr_row(row_ptr, col, val, x, y, i);
}

void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame) {
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px)
      frame[static_cast<size_t>(py) * width + px] =
          disc_pixel(height, width, centers_xy, radius, px, py);
}

}  // namespace serial

namespace omp {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  DenseMatrix c(a.rows(), b.cols());
  const int rows = a.rows();
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (int i = 0; i < rows; ++i) matmul_row(a, b, c, i);
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale) {
  require(a.rows() == b.rows(), "matmul_tn: batch dimensions differ");
  DenseMatrix c(a.cols(), b.cols());
  const int rows = a.cols();
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (int i = 0; i < rows; ++i) matmul_tn_row(a, b, scale, c, i);
  return c;
}

DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias) {
  require(x.cols() == w.cols(), "affine: input width does not match weights");
  require(static_cast<int>(bias.size()) == w.rows(), "affine: bias size");
  DenseMatrix y(x.rows(), w.rows());
  const int rows = x.rows();
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (int r = 0; r < rows; ++r) affine_row(x, w, bias, y, r);
  return y;
}

DenseMatrix softplus(const DenseMatrix& z) {
  DenseMatrix a(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = a.data();
  const std::int64_t n = static_cast<std::int64_t>(z.size());
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (std::int64_t i = 0; i < n; ++i) dst[i] = softplus_scalar(src[i]);
  return a;
}

DenseMatrix sigmoid(const DenseMatrix& z) {
  DenseMatrix a(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = a.data();
  const std::int64_t n = static_cast<std::int64_t>(z.size());
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (std::int64_t i = 0; i < n; ++i) dst[i] = sigmoid_scalar(src[i]);
  return a;
}

void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig) {
  act = DenseMatrix(z.rows(), z.cols());
  sig = DenseMatrix(z.rows(), z.cols());
  const double* src = z.data();
  double* a = act.data();
  double* s = sig.data();
  const std::int64_t n = static_cast<std::int64_t>(z.size());
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (std::int64_t i = 0; i < n; ++i) softplus_sig_scalar(src[i], a[i], s[i]);
}

void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y) {
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (int i = 0; i < n; ++i) csr_row(row_ptr, col, val, x, y, i);
}

void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame) {
#pragma omp parallel for schedule(static) num_threads(parallel::max_threads())
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px)
      frame[static_cast<size_t>(py) * width + px] =
          disc_pixel(height, width, centers_xy, radius, px, py);
}

}  // namespace omp

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  const std::int64_t work =
      static_cast<std::int64_t>(a.rows()) * a.cols() * b.cols();
  return go_parallel(work) ? omp::matmul(a, b) : serial::matmul(a, b);
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale) {
  const std::int64_t work =
      static_cast<std::int64_t>(a.rows()) * a.cols() * b.cols();
  return go_parallel(work) ? omp::matmul_tn(a, b, scale)
                           : serial::matmul_tn(a, b, scale);
}

DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias) {
  const std::int64_t work =
      static_cast<std::int64_t>(x.rows()) * x.cols() * w.rows();
  return go_parallel(work) ? omp::affine(x, w, bias) : serial::affine(x, w, bias);
}

DenseMatrix softplus(const DenseMatrix& z) {
  return go_parallel(static_cast<std::int64_t>(z.size()) * 8)
             ? omp::softplus(z)
             : serial::softplus(z);
}

DenseMatrix sigmoid(const DenseMatrix& z) {
  return go_parallel(static_cast<std::int64_t>(z.size()) * 8)
             ? omp::sigmoid(z)
             : serial::sigmoid(z);
}

void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig) {
  if (go_parallel(static_cast<std::int64_t>(z.size()) * 8))
    omp::softplus_sig(z, act, sig);
  else
    serial::softplus_sig(z, act, sig);
}

void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y) {
  if (go_parallel(static_cast<std::int64_t>(val.size()) * 4))
    omp::csr_matvec(n, row_ptr, col, val, x, y);
  else
    serial::csr_matvec(n, row_ptr, col, val, x, y);
}

void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame) {
  const std::int64_t work = static_cast<std::int64_t>(height) * width *
                            16 * static_cast<std::int64_t>(centers_xy.size() / 2);
  if (go_parallel(work))
    omp::render_discs(height, width, centers_xy, radius, frame);
  else
    serial::render_discs(height, width, centers_xy, radius, frame);
}

}  // namespace spinet::kernels
