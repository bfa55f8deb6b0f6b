#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsf {

#ifdef QSF_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingFileError : IoError {
  using IoError::IoError;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Row vectors are 1 x c, scalars 1 x 1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<real> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, real(0)) {}

  real& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  real operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix filled(int r, int c, real v) {
    Matrix m(r, c);
    for (auto& x : m.data) x = v;
    return m;
  }
  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = real(1);
    return m;
  }
};

bool all_finite(const Matrix& m);
void require_shape(const Matrix& m, int rows, int cols, const std::string& what);
real max_abs_diff(const Matrix& a, const Matrix& b);
bool bit_equal(const Matrix& a, const Matrix& b);

}  // namespace qsf
