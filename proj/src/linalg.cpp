#include "shaperl/linalg.hpp"

#include <cmath>
#include <cstdlib>

#include "shaperl/errors.hpp"

namespace shaperl {

std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.cols)
    throw ValidationError("matvec: dimension mismatch");
  std::vector<double> y(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    double s = 0.0;
    for (int j = 0; j < m.cols; ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

std::vector<double> mat_t_vec(const Matrix& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.rows)
    throw ValidationError("mat_t_vec: dimension mismatch");
  std::vector<double> y(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    const double xi = x[i];
    for (int j = 0; j < m.cols; ++j) y[j] += r[j] * xi;
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ValidationError("matmul: dimension mismatch");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (int j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ValidationError("matmul_bt: dimension mismatch");
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      c(i, j) = s;
    }
  }
  return c;
}

std::vector<double> cholesky_solve(Matrix a, std::vector<double> b) {
  const int n = a.rows;
  if (a.cols != n || static_cast<int>(b.size()) != n)
    throw ValidationError("cholesky_solve: need square A and matching b");
  // A = L L^T, stored in the lower triangle of a.
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (d <= 0.0) throw RuntimeFault("cholesky_solve: matrix not positive definite");
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  // Forward substitution: L y = b.
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  // Back substitution: L^T x = y.
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
    b[i] = s / a(i, i);
  }
  return b;
}

double symmetric_min_eigenvalue(Matrix a) {
  const int n = a.rows;
  if (a.cols != n) throw ValidationError("symmetric_min_eigenvalue: need square matrix");
  // Cyclic Jacobi; plenty for the small matrices used here (n <= ~32).
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double mn = a(0, 0);
  for (int i = 1; i < n; ++i) mn = std::min(mn, a(i, i));
  return mn;
}

namespace {

// M^T M, cols x cols — the small Gram when the matrix is tall.
Matrix gram_tt(const Matrix& m) {
  Matrix g(m.cols, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (int j = 0; j < m.cols; ++j) {
      const double rj = r[j];
      double* gr = g.row(j);
      for (int k = 0; k < m.cols; ++k) gr[k] += rj * r[k];
    }
  }
  return g;
}

}  // namespace

double min_singular_value(const Matrix& m) {
  // Use whichever Gram matrix is smaller; its least eigenvalue is the square
  // of the least singular value of the map itself.
  Matrix g = (m.rows <= m.cols) ? matmul_bt(m, m) : gram_tt(m);
  const double lam = symmetric_min_eigenvalue(g);
  return lam > 0.0 ? std::sqrt(lam) : 0.0;
}

std::vector<double> min_norm_solve(const Matrix& m, const std::vector<double>& y) {
  Matrix g = matmul_bt(m, m);
  std::vector<double> w = cholesky_solve(g, y);
  return mat_t_vec(m, w);
}

std::vector<double> lstsq_solve(const Matrix& m, const std::vector<double>& y) {
  if (m.rows <= m.cols) {
    // Wide (or square): the minimum-norm exact solution M^T (M M^T)^{-1} y.
    return min_norm_solve(m, y);
  }
  // Tall: ordinary least squares via the normal equations (M^T M)^{-1} M^T y.
  Matrix g = gram_tt(m);
  std::vector<double> rhs = mat_t_vec(m, y);
  return cholesky_solve(g, rhs);
}

}  // namespace shaperl
