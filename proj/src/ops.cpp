#include "qivc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "qivc/error.hpp"

namespace qivc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using detail::Node;

bool wants_grad(const Node& self, std::size_t parent) { return self.parents[parent]->requires_grad; }
std::vector<double>& grad_of(Node& self, std::size_t parent) { return self.parents[parent]->ensure_grad(); }
const std::vector<double>& value_of(const Node& self, std::size_t parent) {
  return self.parents[parent]->value;
}

// dst += lhs·rhs. Small and vector-shaped products run as fixed-order loops;
// Eigen's kernels for those shapes round according to buffer alignment.
template <class Dst, class Lhs, class Rhs>
void add_product(Dst&& dst, const Lhs& lhs, const Rhs& rhs) {
  const auto rows = dst.rows(), cols = dst.cols(), inner = lhs.cols();
  if (rows + cols + inner >= 20 && rows > 1 && cols > 1) {
    dst.noalias() += lhs * rhs;
    return;
  }
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < inner; ++k) acc += lhs(i, k) * rhs(k, j);
      dst(i, j) += acc;
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                     ", got shape " + to_string(t.shape()));
  }
}

void require_dim(const char* op, const char* what, std::size_t got, std::size_t expected) {
  if (got != expected) {
    throw ShapeError(std::string(op) + ": dimension " + what + " is " + std::to_string(got) +
                     " but " + std::to_string(expected) + " was expected");
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return sa;
  if (b.size() == 1 || is_suffix(sb, sa)) return sa;
  if (a.size() == 1 || is_suffix(sa, sb)) return sb;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(sa) + " with " + to_string(sb));
}

template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  Shape out_shape = broadcast_shape(op, a, b);
  const std::size_t n = numel(out_shape);
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  auto va = a.data();
  auto vb = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i % na], vb[i % nb]);
  return detail::make_result(op, std::move(out_shape), std::move(out), {a, b},
                             [n, na, nb, dfa, dfb](Node& self) {
                               const auto& x = value_of(self, 0);
                               const auto& y = value_of(self, 1);
                               if (wants_grad(self, 0)) {
                                 auto& gx = grad_of(self, 0);
                                 for (std::size_t i = 0; i < n; ++i)
                                   gx[i % na] += self.grad[i] * dfa(x[i % na], y[i % nb]);
                               }
                               if (wants_grad(self, 1)) {
                                 auto& gy = grad_of(self, 1);
                                 for (std::size_t i = 0; i < n; ++i)
                                   gy[i % nb] += self.grad[i] * dfb(x[i % na], y[i % nb]);
                               }
                             });
}

// df receives (input, output).
template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  auto va = a.data();
  std::vector<double> out(va.size());
  std::transform(va.begin(), va.end(), out.begin(), f);
  return detail::make_result(op, a.shape(), std::move(out), {a}, [df](Node& self) {
    const auto& x = value_of(self, 0);
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
/// out[c] += sum over rows of m[r, c], row-major m, rows in order.
void add_column_sums(const double* m, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += m[r * cols + c];
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      "add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
  return unary("softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_eps(const Tensor& a, double eps) {
  if (!(eps > 0)) throw ConfigError("log_eps: stabilizer must be positive, got " + std::to_string(eps));
  return unary(
      "log", a, [eps](double x) { return std::log(x + eps); }, [eps](double x, double) { return 1.0 / (x + eps); });
}

Tensor sum(const Tensor& a) {
  auto va = a.data();
  double total = 0.0;
  for (double v : va) total += v;
  return detail::make_result("sum", {}, {total}, {a}, [](Node& self) {
    auto& gx = grad_of(self, 0);
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return detail::make_result("reshape", std::move(shape), a.to_vector(), {a}, [](Node& self) {
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " + to_string(first));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::vector<std::size_t> chunk(parts.size());
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(s) + " vs " + to_string(first));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: dimension " + std::to_string(d) + " differs (" + to_string(s) + " vs " +
                         to_string(first) + ")");
      }
    }
    out_shape[axis] += s[axis];
    chunk[p] = parts[p].size() / outer;
  }
  std::size_t row = 0;
  for (auto c : chunk) row += c;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * chunk[p], chunk[p], out.begin() + o * row + offset);
    offset += chunk[p];
  }
  return detail::make_result("concat", std::move(out_shape), std::move(out), parts,
                             [chunk, outer, row](Node& self) {
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < chunk.size(); ++p) {
                                 if (wants_grad(self, p)) {
                                   auto& g = grad_of(self, p);
                                   for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t i = 0; i < chunk[p]; ++i)
                                       g[o * chunk[p] + i] += self.grad[o * row + off + i];
                                 }
                                 off += chunk[p];
                               }
                             });
}

Tensor reverse_time(const Tensor& x) {
  require_rank(x, 3, "reverse_time", "input");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      std::copy_n(v.begin() + (b * T + (T - 1 - t)) * C, C, out.begin() + (b * T + t) * C);
  return detail::make_result("reverse_time", x.shape(), std::move(out), {x}, [B, T, C](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) g[(b * T + (T - 1 - t)) * C + c] += self.grad[(b * T + t) * C + c];
  });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(kernel, 3, "conv1d", "kernel");
  require_rank(bias, 1, "conv1d", "bias");
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t B = x.dim(0), T = x.dim(1), Ci = x.dim(2);
  const std::size_t K = kernel.dim(0), Co = kernel.dim(2);
  require_dim("conv1d", "kernel Cin", kernel.dim(1), Ci);
  require_dim("conv1d", "bias Cout", bias.dim(0), Co);
  if (K > T) {
    throw ShapeError("conv1d: kernel width " + std::to_string(K) + " exceeds time extent " + std::to_string(T));
  }
  const std::size_t To = stride == 1 ? T : T / stride;
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const auto s = static_cast<std::ptrdiff_t>(stride);

  // Output rows [lo, hi) whose tap k lands inside [0, T).
  auto tap_range = [=](std::size_t k) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
    std::ptrdiff_t lo = shift >= 0 ? 0 : (-shift + s - 1) / s;
    std::ptrdiff_t hi_incl = (static_cast<std::ptrdiff_t>(T) - 1 - shift);
    hi_incl = hi_incl < 0 ? -1 : hi_incl / s;
    hi_incl = std::min<std::ptrdiff_t>(hi_incl, static_cast<std::ptrdiff_t>(To) - 1);
    return std::pair<std::ptrdiff_t, std::ptrdiff_t>{lo, std::max(lo, hi_incl + 1)};
  };

  std::vector<double> out(B * To * Co);
  auto bv = bias.data();
  for (std::size_t r = 0; r < B * To; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * Co);
  const double* xp = x.data().data();
  const double* wp = kernel.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      auto [lo, hi] = tap_range(k);
      if (hi <= lo) continue;
      const std::ptrdiff_t first_in = lo * s + static_cast<std::ptrdiff_t>(k) - pad;
      ConstStridedMap xs(xp + (b * T + first_in) * Ci, hi - lo, Ci, Eigen::OuterStride<>(s * Ci));
      ConstMatMap wk(wp + k * Ci * Co, Ci, Co);
      MatMap o(out.data() + (b * To + lo) * Co, hi - lo, Co);
      add_product(o, xs, wk);
    }
  }

  return detail::make_result(
      "conv1d", {B, To, Co}, std::move(out), {x, kernel, bias},
      [=](Node& self) {
        const double* gp = self.grad.data();
        const double* xv = value_of(self, 0).data();
        const double* wv = value_of(self, 1).data();
        const bool gx = wants_grad(self, 0), gw = wants_grad(self, 1), gb = wants_grad(self, 2);
        double* dx = gx ? grad_of(self, 0).data() : nullptr;
        double* dw = gw ? grad_of(self, 1).data() : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t k = 0; k < K; ++k) {
            auto [lo, hi] = tap_range(k);
            if (hi <= lo) continue;
            const std::ptrdiff_t first_in = lo * s + static_cast<std::ptrdiff_t>(k) - pad;
            ConstMatMap g(gp + (b * To + lo) * Co, hi - lo, Co);
            if (gx) {
              StridedMap dxs(dx + (b * T + first_in) * Ci, hi - lo, Ci, Eigen::OuterStride<>(s * Ci));
              add_product(dxs, g, ConstMatMap(wv + k * Ci * Co, Ci, Co).transpose());
            }
            if (gw) {
              ConstStridedMap xs(xv + (b * T + first_in) * Ci, hi - lo, Ci, Eigen::OuterStride<>(s * Ci));
              add_product(MatMap(dw + k * Ci * Co, Ci, Co), xs.transpose(), g);
            }
          }
        }
        if (gb) {
          auto& db = grad_of(self, 2);
          for (std::size_t r = 0; r < B * To; ++r)
            for (std::size_t o = 0; o < Co; ++o) db[o] += gp[r * Co + o];
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  if (x.rank() == 0) throw ShapeError("linear: input must have at least one axis");
  const std::size_t F = weight.dim(0), O = weight.dim(1);
  require_dim("linear", "input features", x.shape().back(), F);
  require_dim("linear", "bias", bias.dim(0), O);
  const std::size_t M = x.size() / F;
  Shape out_shape = x.shape();
  out_shape.back() = O;
  std::vector<double> out(M * O);
  MatMap om(out.data(), M, O);
  add_product(om, ConstMatMap(x.data().data(), M, F), ConstMatMap(weight.data().data(), F, O));
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), O);
  return detail::make_result("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                             [M, F, O](Node& self) {
                               ConstMatMap g(self.grad.data(), M, O);
                               if (wants_grad(self, 0))
                                 add_product(MatMap(grad_of(self, 0).data(), M, F), g,
                                             ConstMatMap(value_of(self, 1).data(), F, O).transpose());
                               if (wants_grad(self, 1))
                                 add_product(MatMap(grad_of(self, 1).data(), F, O),
                                             ConstMatMap(value_of(self, 0).data(), M, F).transpose(), g);
                               if (wants_grad(self, 2))
                                 add_column_sums(self.grad.data(), M, O, grad_of(self, 2).data());
                             });
}

Tensor global_max_pool(const Tensor& x) {
  require_rank(x, 3, "global_max_pool", "input");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  if (T == 0) throw ShapeError("global_max_pool: empty time axis");
  auto v = x.data();
  std::vector<double> out(B * C);
  std::vector<std::size_t> arg(B * C);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = b * T * C + c;
      for (std::size_t t = 1; t < T; ++t) {
        const std::size_t idx = (b * T + t) * C + c;
        if (v[idx] > v[best]) best = idx;
      }
      out[b * C + c] = v[best];
      arg[b * C + c] = best;
    }
  }
  return detail::make_result("global_max_pool", {B, C}, std::move(out), {x},
                             [arg = std::move(arg)](Node& self) {
                               auto& g = grad_of(self, 0);
                               for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
                             });
}

Tensor max_pool2(const Tensor& x) {
  require_rank(x, 3, "max_pool2", "input");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  const std::size_t To = T / 2;
  if (To == 0) throw ShapeError("max_pool2: time extent " + std::to_string(T) + " is shorter than the pool width");
  auto v = x.data();
  std::vector<double> out(B * To * C);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i0 = (b * T + 2 * t) * C + c;
        const std::size_t i1 = i0 + C;
        const std::size_t best = v[i1] > v[i0] ? i1 : i0;
        out[(b * To + t) * C + c] = v[best];
        arg[(b * To + t) * C + c] = best;
      }
  return detail::make_result("max_pool2", {B, To, C}, std::move(out), {x}, [arg = std::move(arg)](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: needs at least one axis");
  const std::size_t C = x.shape().back();
  const std::size_t rows = C == 0 ? 0 : x.size() / C;
  auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * C;
    double* o = out.data() + r * C;
    const double mx = *std::max_element(in, in + C);
    double total = 0.0;
    for (std::size_t c = 0; c < C; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < C; ++c) o[c] /= total;
  }
  return detail::make_result("softmax", x.shape(), std::move(out), {x}, [rows, C](Node& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * C;
      const double* gy = self.grad.data() + r * C;
      double dot = 0.0;
      for (std::size_t c = 0; c < C; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < C; ++c) g[r * C + c] += y[c] * (gy[c] - dot);
    }
  });
}

BatchNormStats BatchNormStats::create(std::size_t channels, double momentum, double eps) {
  if (!(eps > 0)) throw ConfigError("batch_norm: eps must be positive");
  if (!(momentum >= 0 && momentum <= 1)) throw ConfigError("batch_norm: momentum must lie in [0,1]");
  return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0), momentum, eps};
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training) {
  if (x.rank() == 0) throw ShapeError("batch_norm: input needs a channel axis");
  if (!(stats.eps > 0)) throw ConfigError("batch_norm: eps must be positive");
  const std::size_t C = x.shape().back();
  require_dim("batch_norm", "gamma", gamma.size(), C);
  require_dim("batch_norm", "beta", beta.size(), C);
  require_dim("batch_norm", "running stats", stats.running_mean.size(), C);
  const std::size_t M = x.size() / C;
  if (M == 0) throw ShapeError("batch_norm: empty input");
  auto v = x.data();
  std::vector<double> mu(C, 0.0), inv_std(C);
  if (training) {
    std::vector<double> var(C, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) mu[c] += v[m * C + c];
    for (auto& m : mu) m /= static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = v[m * C + c] - mu[c];
        var[c] += d * d;
      }
    auto rm = stats.running_mean.mutable_data();
    auto rv = stats.running_var.mutable_data();
    for (std::size_t c = 0; c < C; ++c) {
      const double biased = var[c] / static_cast<double>(M);
      const double unbiased = M > 1 ? var[c] / static_cast<double>(M - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + stats.eps);
      rm[c] = (1.0 - stats.momentum) * rm[c] + stats.momentum * mu[c];
      rv[c] = (1.0 - stats.momentum) * rv[c] + stats.momentum * unbiased;
    }
  } else {
    auto rm = stats.running_mean.data();
    auto rv = stats.running_var.data();
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + stats.eps);
    }
  }
  auto g = gamma.data();
  auto bt = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(v.size());
  std::vector<double> out(v.size());
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = m * C + c;
      (*xhat)[i] = (v[i] - mu[c]) * inv_std[c];
      out[i] = g[c] * (*xhat)[i] + bt[c];
    }
  return detail::make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [M, C, training, xhat, inv_std = std::move(inv_std)](Node& self) {
        const auto& gy = self.grad;
        const auto& gam = value_of(self, 1);
        std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t c = 0; c < C; ++c) {
            sum_g[c] += gy[m * C + c];
            sum_gx[c] += gy[m * C + c] * (*xhat)[m * C + c];
          }
        if (wants_grad(self, 0)) {
          auto& gx = grad_of(self, 0);
          const double inv_m = 1.0 / static_cast<double>(M);
          for (std::size_t m = 0; m < M; ++m)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t i = m * C + c;
              if (training) {
                gx[i] += gam[c] * inv_std[c] * (gy[i] - inv_m * sum_g[c] - (*xhat)[i] * inv_m * sum_gx[c]);
              } else {
                gx[i] += gam[c] * inv_std[c] * gy[i];
              }
            }
        }
        if (wants_grad(self, 1)) {
          auto& gg = grad_of(self, 1);
          for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
        }
        if (wants_grad(self, 2)) {
          auto& gb = grad_of(self, 2);
          for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
        }
      });
}

Tensor lstm(const Tensor& x, const Tensor& w_input, const Tensor& w_hidden, const Tensor& bias,
            const Tensor& h0, const Tensor& c0) {
  require_rank(x, 3, "lstm", "input");
  require_rank(w_input, 2, "lstm", "input weights");
  require_rank(w_hidden, 2, "lstm", "hidden weights");
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  const std::size_t H = w_hidden.dim(0), G = 4 * H;
  require_dim("lstm", "input weights rows", w_input.dim(0), C);
  require_dim("lstm", "input weights cols", w_input.dim(1), G);
  require_dim("lstm", "hidden weights cols", w_hidden.dim(1), G);
  require_dim("lstm", "bias", bias.size(), G);
  require_dim("lstm", "h0", h0.size(), B * H);
  require_dim("lstm", "c0", c0.size(), B * H);

  // Time-major scratch: step t occupies rows [t·B, (t+1)·B). gates holds the
  // activated (i, f, g, o); hs and cs carry the initial state in block 0, so
  // the state entering step t is block t and the state leaving it block t+1.
  const std::size_t BH = B * H, BG = B * G;
  auto xt = std::make_shared<std::vector<double>>(T * B * C);
  auto gates = std::make_shared<std::vector<double>>(T * BG);
  auto hs = std::make_shared<std::vector<double>>((T + 1) * BH);
  auto cs = std::make_shared<std::vector<double>>((T + 1) * BH);
  auto tcs = std::make_shared<std::vector<double>>(T * BH);  // tanh(c)
  {
    auto xv = x.data();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        std::copy_n(xv.data() + (b * T + t) * C, C, xt->data() + (t * B + b) * C);
  }
  std::copy_n(h0.data().data(), BH, hs->data());
  std::copy_n(c0.data().data(), BH, cs->data());
  {
    MatMap gm(gates->data(), T * B, G);
    add_product(gm, ConstMatMap(xt->data(), T * B, C), ConstMatMap(w_input.data().data(), C, G));
    gm.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), G);
  }
  ConstMatMap wh(w_hidden.data().data(), H, G);
  // Vectorized exp only ever runs on these Eigen-owned arrays.
  Eigen::ArrayXd work_g(BG), work_c(BH);
  for (std::size_t t = 0; t < T; ++t) {
    MatMap gt(gates->data() + t * BG, B, G);
    add_product(gt, ConstMatMap(hs->data() + t * BH, B, H), wh);
    // tanh(z) = 2·sigmoid(2z) - 1 lets one pass cover all gates.
    gt.middleCols(2 * H, H) *= 2.0;
    work_g = -Eigen::Map<const Eigen::ArrayXd>(gt.data(), BG);
    work_g = 1.0 / (1.0 + work_g.exp());
    Eigen::Map<Eigen::ArrayXd>(gt.data(), BG) = work_g;
    gt.middleCols(2 * H, H).array() = 2.0 * gt.middleCols(2 * H, H).array() - 1.0;

    MatMap c_prev(cs->data() + t * BH, B, H);
    MatMap c_next(cs->data() + (t + 1) * BH, B, H);
    c_next.array() = gt.middleCols(H, H).array() * c_prev.array() +
                     gt.leftCols(H).array() * gt.middleCols(2 * H, H).array();
    work_c = -2.0 * Eigen::Map<const Eigen::ArrayXd>(c_next.data(), BH);
    work_c = 2.0 / (1.0 + work_c.exp()) - 1.0;
    Eigen::Map<Eigen::ArrayXd>(tcs->data() + t * BH, BH) = work_c;
    MatMap(hs->data() + (t + 1) * BH, B, H).array() =
        gt.rightCols(H).array() * ConstMatMap(tcs->data() + t * BH, B, H).array();
  }
  std::vector<double> hidden(B * T * H);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(hs->data() + (t + 1) * BH + b * H, H, hidden.data() + (b * T + t) * H);

  return detail::make_result(
      "lstm", {B, T, H}, std::move(hidden), {x, w_input, w_hidden, bias, h0, c0},
      [=](Node& self) {
        ConstMatMap whv(value_of(self, 2).data(), H, G);
        std::vector<double> dgates(T * BG);
        std::vector<double> dh_in(T * BH);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t t = 0; t < T; ++t)
            std::copy_n(self.grad.data() + (b * T + t) * H, H, dh_in.data() + t * BH + b * H);
        RowMat dh_next = RowMat::Zero(B, H);
        RowMat dc_next = RowMat::Zero(B, H);
        Eigen::ArrayXXd dh(B, H), dc(B, H);
        for (std::size_t tt = T; tt-- > 0;) {
          ConstMatMap gt(gates->data() + tt * BG, B, G);
          ConstMatMap c_prev(cs->data() + tt * BH, B, H);
          ConstMatMap tc(tcs->data() + tt * BH, B, H);
          MatMap dg(dgates.data() + tt * BG, B, G);
          const auto i = gt.leftCols(H).array();
          const auto f = gt.middleCols(H, H).array();
          const auto gc = gt.middleCols(2 * H, H).array();
          const auto o = gt.rightCols(H).array();
          const auto tca = tc.array();
          dh = ConstMatMap(dh_in.data() + tt * BH, B, H).array() + dh_next.array();
          dc = dh * o * (1.0 - tca * tca) + dc_next.array();
          dc_next.array() = dc * f;
          dg.leftCols(H).array() = dc * gc * i * (1.0 - i);
          dg.middleCols(H, H).array() = dc * c_prev.array() * f * (1.0 - f);
          dg.middleCols(2 * H, H).array() = dc * i * (1.0 - gc * gc);
          dg.rightCols(H).array() = dh * tca * o * (1.0 - o);
          dh_next.setZero();
          add_product(dh_next, dg, whv.transpose());
        }
        ConstMatMap dgm(dgates.data(), T * B, G);
        if (wants_grad(self, 0)) {
          RowMat dx = RowMat::Zero(T * B, C);
          add_product(dx, dgm, ConstMatMap(value_of(self, 1).data(), C, G).transpose());
          auto& gx = grad_of(self, 0);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < T; ++t)
              for (std::size_t c = 0; c < C; ++c) gx[(b * T + t) * C + c] += dx(t * B + b, c);
        }
        if (wants_grad(self, 1))
          add_product(MatMap(grad_of(self, 1).data(), C, G), ConstMatMap(xt->data(), T * B, C).transpose(), dgm);
        if (wants_grad(self, 2))
          add_product(MatMap(grad_of(self, 2).data(), H, G), ConstMatMap(hs->data(), T * B, H).transpose(), dgm);
        if (wants_grad(self, 3))
          add_column_sums(dgates.data(), T * B, G, grad_of(self, 3).data());
        if (wants_grad(self, 4)) MatMap(grad_of(self, 4).data(), B, H) += dh_next;
        if (wants_grad(self, 5)) MatMap(grad_of(self, 5).data(), B, H) += dc_next;
      });
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::softplus: return softplus(x);
  }
  return x;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

}  // namespace qivc
