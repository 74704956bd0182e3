#include "spinet/heatmap.hpp"

#include <cmath>
#include <fstream>

namespace spinet::cli {

namespace {

unsigned char clamp_byte(double v) {
  const long r = std::lround(v);
  if (r < 0) return 0;
  if (r > 255) return 255;
  return static_cast<unsigned char>(r);
}

void append_header(std::vector<unsigned char>& out, const char* magic,
                   int width, int height) {
  const std::string head = std::string(magic) + "\n" + std::to_string(width) +
                           " " + std::to_string(height) + "\n255\n";
  out.insert(out.end(), head.begin(), head.end());
}

double max_abs_checked(const DenseMatrix& values) {
  if (!values.all_finite())
    throw DomainViolation("export_heatmap: non-finite value in grid");
  return values.max_abs();
}

}  // namespace

std::vector<unsigned char> heatmap_pgm_bytes(const DenseMatrix& values) {
  const double scale = max_abs_checked(values);
  std::vector<unsigned char> out;
  out.reserve(values.size() + 32);
  append_header(out, "P5", values.cols(), values.rows());
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c) {
      const double t = scale > 0.0 ? values(r, c) / scale : 0.0;
      out.push_back(clamp_byte(127.5 * (1.0 + t)));
    }
  return out;
}

std::vector<unsigned char> heatmap_ppm_bytes(const DenseMatrix& values) {
  const double scale = max_abs_checked(values);
  std::vector<unsigned char> out;
  out.reserve(values.size() * 3 + 32);
  append_header(out, "P6", values.cols(), values.rows());
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c) {
      const double v = scale > 0.0 ? values(r, c) / scale : 0.0;
      const unsigned char fade = clamp_byte(255.0 * (1.0 - std::fabs(v)));
      if (v >= 0.0) {  // white -> red
        out.push_back(255);
        out.push_back(fade);
        out.push_back(fade);
      } else {  // white -> blue
        out.push_back(fade);
        out.push_back(fade);
        out.push_back(255);
      }
    }
  return out;
}

void export_heatmap(const DenseMatrix& values, const std::string& base) {
  auto write = [](const std::string& path,
                  const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("export_heatmap: cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("export_heatmap: short write to " + path);
  };
  write(base + ".pgm", heatmap_pgm_bytes(values));
  write(base + ".ppm", heatmap_ppm_bytes(values));
}

}  // namespace spinet::cli
