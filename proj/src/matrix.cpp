#include "qsf/matrix.hpp"

#include <cmath>
#include <cstring>

namespace qsf {

bool all_finite(const Matrix& m) {
  for (real v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_shape(const Matrix& m, int rows, int cols, const std::string& what) {
  if (m.rows != rows || m.cols != cols)
    throw ShapeError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
}

real max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  real m = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    real d = std::abs(a.data[i] - b.data[i]);
    if (d > m) m = d;
  }
  return m;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  if (a.data.empty()) return true;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(real)) == 0;
}

}  // namespace qsf
