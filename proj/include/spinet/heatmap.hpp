#ifndef SPINET_HEATMAP_HPP
#define SPINET_HEATMAP_HPP

#include <string>
#include <vector>

#include "spinet/matrix.hpp"

namespace spinet::cli {

// Writes `base`.pgm (8-bit grayscale, zero maps to mid-gray 128) and
// `base`.ppm (blue-white-red, symmetric about zero with range +-max|value|).
// Deterministic bytes for a given value grid.
void export_heatmap(const DenseMatrix& values, const std::string& base);

// In-memory forms, used by the byte-determinism tests.
std::vector<unsigned char> heatmap_pgm_bytes(const DenseMatrix& values);
std::vector<unsigned char> heatmap_ppm_bytes(const DenseMatrix& values);

}  // namespace spinet::cli

#endif  // SPINET_HEATMAP_HPP
