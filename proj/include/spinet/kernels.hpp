#ifndef SPINET_KERNELS_HPP
#define SPINET_KERNELS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "spinet/matrix.hpp"

// Data-parallel compute kernels. Every kernel has a serial reference
// implementation under kernels::serial and an OpenMP version under
// kernels::omp. The two are bit-identical: the parallel loops split over
// independent output elements and keep the per-element accumulation order of
// the reference. The unqualified entry points dispatch to the OpenMP path
// unless parallel::force_serial is set or the problem is too small to be
// worth a fork/join.

namespace spinet::kernels {

namespace serial {

// C = A * B
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// C = scale * A^T * B  (A: B x m, B: B x n -> m x n)
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale);
// Y = X * W^T + bias  (X: B x m, W: n x m, bias: n -> B x n)
DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias);
// Overflow-stable softplus, elementwise.
DenseMatrix softplus(const DenseMatrix& z);
// Logistic sigmoid (the softplus derivative), elementwise.
DenseMatrix sigmoid(const DenseMatrix& z);
// Both at once, sharing one exp per element.
void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig);
// y = A x for a symmetric CSR matrix (full pattern, both triangles stored).
void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y);
// Anti-aliased disc coverage of an H x W frame. Centers are (x, y) pairs in
// unit coordinates, radius is a unit-square fraction; 4x4 subpixel sampling.
void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame);

}  // namespace serial

namespace omp {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale);
DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias);
DenseMatrix softplus(const DenseMatrix& z);
DenseMatrix sigmoid(const DenseMatrix& z);
void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig);
void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y);
void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame);

}  // namespace omp

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b, double scale);
DenseMatrix affine(const DenseMatrix& x, const DenseMatrix& w,
                   std::span<const double> bias);
DenseMatrix softplus(const DenseMatrix& z);
DenseMatrix sigmoid(const DenseMatrix& z);
void softplus_sig(const DenseMatrix& z, DenseMatrix& act, DenseMatrix& sig);
void csr_matvec(int n, std::span<const int> row_ptr, std::span<const int> col,
                std::span<const double> val, std::span<const double> x,
                std::span<double> y);
void render_discs(int height, int width, std::span<const double> centers_xy,
                  double radius, std::span<float> frame);

// Single-point softplus/sigmoid used by both paths.
double softplus_scalar(double x);
double sigmoid_scalar(double x);

}  // namespace spinet::kernels

#endif  // SPINET_KERNELS_HPP
