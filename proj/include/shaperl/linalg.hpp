#pragma once

#include <cstddef>
#include <vector>

namespace shaperl {

// Minimal row-major dense matrix of doubles.  Just enough for the surrogate
// model and the networks; not a general linear algebra library.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// y = M x
std::vector<double> matvec(const Matrix& m, const std::vector<double>& x);
// y = M^T x
std::vector<double> mat_t_vec(const Matrix& m, const std::vector<double>& x);

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

// Solves A x = b for symmetric positive definite A (in place Cholesky).
std::vector<double> cholesky_solve(Matrix a, std::vector<double> b);

// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
double symmetric_min_eigenvalue(Matrix a);

// Smallest singular value of an arbitrary m x n matrix, computed from the
// smaller of the two Gram matrices.
double min_singular_value(const Matrix& m);

// Minimum-norm least squares solution of M x = y for full-row-rank M:
// x = M^T (M M^T)^{-1} y.
std::vector<double> min_norm_solve(const Matrix& m, const std::vector<double>& y);

// Pseudoinverse solve for either orientation: wide matrices get the
// minimum-norm exact solution, tall ones the normal-equation least squares.
std::vector<double> lstsq_solve(const Matrix& m, const std::vector<double>& y);

}  // namespace shaperl
