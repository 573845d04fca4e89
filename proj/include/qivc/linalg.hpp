#pragma once

#include <cstddef>
#include <vector>

#include "qivc/rng.hpp"

namespace qivc {

/// Small dense row-major matrix used by the subspace sampler.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix gaussian(std::size_t r, std::size_t c, Rng& rng);

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  Matrix transposed() const;
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);
std::vector<double> matvec_t(const Matrix& a, const std::vector<double>& x);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Determinant by partial-pivot LU; intended for the small k×k rotations.
double determinant(Matrix a);

struct QrResult {
  Matrix q;  // N×k, orthonormal columns
  Matrix r;  // k×k, upper triangular
};

/// Thin QR by Householder reflections. Throws NumericalError when a diagonal
/// entry of R falls below 1e-12 in magnitude; callers resample and retry.
QrResult householder_qr(const Matrix& m);

/// Orthonormal basis of a random k-dimensional subspace of R^n.
struct SubspaceBasis {
  Matrix q;
  std::size_t n() const { return q.rows; }
  std::size_t k() const { return q.cols; }
};

/// Element of SO(k).
struct RotationMatrix {
  Matrix u;
  std::size_t k() const { return u.rows; }
};

/// Q factor of an n×k standard Gaussian matrix (filled row-major). No sign
/// normalization is applied.
SubspaceBasis orthonormal_basis(std::size_t n, std::size_t k, Rng& rng);

/// Haar-distributed rotation: QR of a k×k Gaussian matrix, columns scaled by
/// sign(diag R), then the first column negated if the determinant is -1.
RotationMatrix haar_so(std::size_t k, Rng& rng);

}  // namespace qivc
