#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "qivc/linalg.hpp"
#include "qivc/rng.hpp"
#include "qivc/tensor.hpp"

namespace qivc {

struct QireConfig {
  std::size_t k = 5;            // subspace dimension
  double p = 0.05;              // decoherence (drop) probability
  bool rescale_sqrt_n = false;  // multiply the unit-norm noise by sqrt(N)

  /// Checks 0 <= p <= 1 and k >= 1; `n`, when nonzero, also checks k <= n.
  void validate(std::size_t n = 0) const;
};

/// Structured noise shaped like a kernel.
struct NoiseTensor {
  Shape shape;
  std::vector<double> values;
  double norm = 0.0;  // Euclidean norm of the flattened values

  Tensor tensor() const { return Tensor::from(shape, values); }
};

/// Every intermediate of one sampler call, for diagnostics and tests.
struct QireDraw {
  NoiseTensor noise;
  std::vector<double> base;  // unit-norm base noise before the rotation
  SubspaceBasis basis;
  RotationMatrix rotation;
  std::vector<bool> kept;  // decoherence mask; empty when p == 0
};

/// Rotated-ensemble noise for a kernel of the given shape.
///
/// Draw order from `rng`: base Gaussian vector (N), subspace Gaussian matrix
/// (N×k), rotation Gaussian matrix (k×k), then N mask uniforms when p > 0.
/// The unit-norm base noise has its component in a random k-dimensional
/// subspace replaced by that component rotated by a Haar SO(k) element; the
/// orthogonal complement is left as is. Masked-out entries become 1/sqrt(N).
QireDraw qire_sample_detailed(const Shape& kernel_shape, const QireConfig& cfg, Rng& rng);

inline NoiseTensor qire_sample(const Shape& kernel_shape, const QireConfig& cfg, Rng& rng) {
  return qire_sample_detailed(kernel_shape, cfg, rng).noise;
}

struct NoiseStatistics {
  std::size_t k = 0;
  double p = 0.0;
  std::size_t n = 0;
  std::size_t trials = 0;
  double mean_norm = 0.0;
  double norm_std = 0.0;
  double elem_mean = 0.0;  // pooled over elements and trials
  double elem_var = 0.0;
  double subspace_energy = 0.0;  // mean of |QQᵀe|² / |e|²
};

NoiseStatistics noise_statistics(const QireConfig& cfg, const Shape& kernel_shape, std::size_t trials, Rng& rng);

void write_noise_statistics_header(std::ostream& os);
void write_noise_statistics_row(std::ostream& os, const NoiseStatistics& s);

}  // namespace qivc
