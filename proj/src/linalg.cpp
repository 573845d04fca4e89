#include "qivc/linalg.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "qivc/error.hpp"

namespace qivc {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.values) v = rng.normal();
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aip * b(p, j);
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: row counts differ");
  Matrix c(a.cols, b.cols);
  for (std::size_t p = 0; p < a.rows; ++p)
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double api = a(p, i);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += api * b(p, j);
    }
  return c;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  if (a.cols != x.size()) throw ShapeError("matvec: size mismatch");
  std::vector<double> y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) y[i] += a(i, j) * x[j];
  return y;
}

std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x) {
  if (a.rows != x.size()) throw ShapeError("matvec_t: size mismatch");
  std::vector<double> y(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += a(i, j) * x[i];
  return y;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ShapeError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  return worst;
}

double determinant(Matrix a) {
  if (a.rows != a.cols) throw ShapeError("determinant: matrix is not square");
  const std::size_t n = a.rows;
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(pivot, c))) pivot = r;
    if (a(pivot, c) == 0.0) return 0.0;
    if (pivot != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(pivot, j));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double factor = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= factor * a(c, j);
    }
  }
  return det;
}

QrResult householder_qr(const Matrix& m) {
  const std::size_t n = m.rows, k = m.cols;
  if (k == 0 || n < k) {
    throw ShapeError("householder_qr: need N >= k >= 1, got " + std::to_string(n) + "x" + std::to_string(k));
  }
  Matrix a = m;
  std::vector<std::vector<double>> reflectors(k);
  for (std::size_t j = 0; j < k; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = j; i < n; ++i) norm2 += a(i, j) * a(i, j);
    const double norm = std::sqrt(norm2);
    const double alpha = a(j, j) >= 0 ? -norm : norm;
    auto& v = reflectors[j];
    v.assign(n - j, 0.0);
    for (std::size_t i = j; i < n; ++i) v[i - j] = a(i, j);
    v[0] -= alpha;
    double vnorm2 = 0.0;
    for (double x : v) vnorm2 += x * x;
    if (vnorm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(vnorm2);
      for (auto& x : v) x *= inv;
      for (std::size_t c = j; c < k; ++c) {
        double dot = 0.0;
        for (std::size_t i = j; i < n; ++i) dot += v[i - j] * a(i, c);
        for (std::size_t i = j; i < n; ++i) a(i, c) -= 2.0 * dot * v[i - j];
      }
    }
    // Column j below the diagonal is now zero up to rounding.
    a(j, j) = alpha;
    for (std::size_t i = j + 1; i < n; ++i) a(i, j) = 0.0;
  }

  QrResult out{Matrix(n, k), Matrix(k, k)};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) out.r(i, j) = a(i, j);
    if (std::abs(out.r(i, i)) < 1e-12) {
      throw NumericalError("householder_qr: rank deficient input (|r_" + std::to_string(i) + std::to_string(i) +
                           "| < 1e-12)");
    }
  }
  for (std::size_t i = 0; i < k; ++i) out.q(i, i) = 1.0;
  for (std::size_t j = k; j-- > 0;) {
    const auto& v = reflectors[j];
    for (std::size_t c = 0; c < k; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < n; ++i) dot += v[i - j] * out.q(i, c);
      if (dot == 0.0) continue;
      for (std::size_t i = j; i < n; ++i) out.q(i, c) -= 2.0 * dot * v[i - j];
    }
  }
  return out;
}

namespace {

constexpr int kMaxResample = 8;

}  // namespace

SubspaceBasis orthonormal_basis(std::size_t n, std::size_t k, Rng& rng) {
  if (k == 0 || k > n) {
    throw ConfigError("orthonormal_basis: need 1 <= k <= n, got n=" + std::to_string(n) + " k=" + std::to_string(k));
  }
  for (int attempt = 0;; ++attempt) {
    try {
      return {householder_qr(Matrix::gaussian(n, k, rng)).q};
    } catch (const NumericalError&) {
      if (attempt + 1 >= kMaxResample) throw;
    }
  }
}

RotationMatrix haar_so(std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigError("haar_so: k must be positive");
  for (int attempt = 0;; ++attempt) {
    try {
      QrResult qr = householder_qr(Matrix::gaussian(k, k, rng));
      if (k == 1) return {Matrix::identity(1)};  // SO(1) = {+1}; the reflection leaves ulp noise
      Matrix u = std::move(qr.q);
      for (std::size_t c = 0; c < k; ++c) {
        if (qr.r(c, c) < 0) {
          for (std::size_t r = 0; r < k; ++r) u(r, c) = -u(r, c);
        }
      }
      if (determinant(u) < 0) {
        for (std::size_t r = 0; r < k; ++r) u(r, 0) = -u(r, 0);
      }
      return {std::move(u)};
    } catch (const NumericalError&) {
      if (attempt + 1 >= kMaxResample) throw;
    }
  }
}

}  // namespace qivc
