#include "qivc/qire.hpp"

#include <cmath>
#include <string>

#include "qivc/error.hpp"
#include "qivc/format.hpp"

namespace qivc {

void QireConfig::validate(std::size_t n) const {
  if (k == 0) throw ConfigError("qire: subspace dimension k must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("qire: decoherence probability p must lie in [0,1], got " + std::to_string(p));
  if (n != 0 && k > n) {
    throw ConfigError("qire: subspace dimension k=" + std::to_string(k) + " exceeds kernel size N=" + std::to_string(n));
  }
}

namespace {

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

QireDraw qire_sample_detailed(const Shape& kernel_shape, const QireConfig& cfg, Rng& rng) {
  const std::size_t n = numel(kernel_shape);
  if (n == 0) throw ShapeError("qire_sample: empty kernel shape " + to_string(kernel_shape));
  cfg.validate(n);

  QireDraw draw;
  std::vector<double> eps(n);
  for (auto& e : eps) e = rng.normal();
  const double norm0 = l2(eps);
  if (!(norm0 > 0)) throw NumericalError("qire_sample: degenerate base noise");
  for (auto& e : eps) e /= norm0;

  draw.basis = orthonormal_basis(n, cfg.k, rng);
  draw.rotation = haar_so(cfg.k, rng);
  const Matrix& q = draw.basis.q;

  const std::vector<double> coords = matvec_t(q, eps);                       // Qᵀe
  const std::vector<double> projected = matvec(q, coords);                   // QQᵀe
  const std::vector<double> rotated = matvec(q, matvec(draw.rotation.u, coords));  // QUQᵀe

  // Grouped as e + (rot - proj) so an identity rotation returns e bit-exactly.
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = eps[i] + (rotated[i] - projected[i]);

  if (cfg.p > 0.0) {
    const double fill = 1.0 / std::sqrt(static_cast<double>(n));
    draw.kept.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool keep = rng.bernoulli(1.0 - cfg.p);
      draw.kept[i] = keep;
      if (!keep) out[i] = fill;
    }
  }
  if (cfg.rescale_sqrt_n) {
    const double s = std::sqrt(static_cast<double>(n));
    for (auto& v : out) v *= s;
  }

  draw.base = std::move(eps);
  draw.noise.shape = kernel_shape;
  draw.noise.norm = l2(out);
  draw.noise.values = std::move(out);
  return draw;
}

NoiseStatistics noise_statistics(const QireConfig& cfg, const Shape& kernel_shape, std::size_t trials, Rng& rng) {
  if (trials == 0) throw ConfigError("noise_statistics: trials must be >= 1");
  NoiseStatistics s;
  s.k = cfg.k;
  s.p = cfg.p;
  s.n = numel(kernel_shape);
  s.trials = trials;
  double norm_sum = 0.0, norm_sq = 0.0, elem_sum = 0.0, elem_sq = 0.0, energy = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    QireDraw d = qire_sample_detailed(kernel_shape, cfg, rng);
    norm_sum += d.noise.norm;
    norm_sq += d.noise.norm * d.noise.norm;
    for (double v : d.noise.values) {
      elem_sum += v;
      elem_sq += v * v;
    }
    const auto inside = matvec(d.basis.q, matvec_t(d.basis.q, d.noise.values));
    double in2 = 0.0;
    for (double v : inside) in2 += v * v;
    const double total2 = d.noise.norm * d.noise.norm;
    energy += total2 > 0 ? in2 / total2 : 0.0;
  }
  const double tn = static_cast<double>(trials);
  const double ne = tn * static_cast<double>(s.n);
  s.mean_norm = norm_sum / tn;
  s.norm_std = std::sqrt(std::max(0.0, norm_sq / tn - s.mean_norm * s.mean_norm));
  s.elem_mean = elem_sum / ne;
  s.elem_var = std::max(0.0, elem_sq / ne - s.elem_mean * s.elem_mean);
  s.subspace_energy = energy / tn;
  return s;
}

void write_noise_statistics_header(std::ostream& os) {
  os << "k,p,N,mean_norm,norm_std,elem_mean,elem_var,subspace_energy\n";
}

void write_noise_statistics_row(std::ostream& os, const NoiseStatistics& s) {
  os << s.k << ',' << fmt_real(s.p) << ',' << s.n << ',' << fmt_real(s.mean_norm) << ',' << fmt_real(s.norm_std) << ','
     << fmt_real(s.elem_mean) << ',' << fmt_real(s.elem_var) << ',' << fmt_real(s.subspace_energy) << '\n';
}

}  // namespace qivc
