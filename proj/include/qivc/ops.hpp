#pragma once

#include <string_view>
#include <vector>

#include "qivc/tensor.hpp"

namespace qivc {

// Broadcasting for the binary elementwise ops: the shapes must be equal, one
// shape must be a trailing suffix of the other (e.g. [C] against [B,T,C]),
// or one operand must hold a single element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);

Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// log(a + eps); eps must be positive.
Tensor log_eps(const Tensor& a, double eps);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

/// out[b,t,c] = x[b,T-1-t,c].
Tensor reverse_time(const Tensor& x);

/// x: [B,T,Cin], kernel: [K,Cin,Cout], bias: [Cout]. Zero padding with left
/// offset K/2; T' = T for stride 1 and T/stride otherwise.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1);

/// x: [B,F] (or any [...,F]), weight: [F,O], bias: [O].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Max over the time axis: [B,T,C] -> [B,C].
Tensor global_max_pool(const Tensor& x);
/// Non-overlapping width-2 max pooling over time: [B,T,C] -> [B,T/2,C].
Tensor max_pool2(const Tensor& x);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Running statistics owned by a batch-norm layer. Updated in place by
/// training-mode calls.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormStats create(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
};

/// Per-channel normalization over every leading axis of x ([..., C]).
/// Training mode normalizes with batch statistics and updates `stats`;
/// inference mode is the affine map using the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training);

/// Single-layer LSTM over [B,T,C] with gate order (input, forget, cell, output).
/// w_input: [C,4H], w_hidden: [H,4H], bias: [4H], h0/c0: [B,H]. Returns the
/// hidden sequence [B,T,H].
Tensor lstm(const Tensor& x, const Tensor& w_input, const Tensor& w_hidden, const Tensor& bias,
            const Tensor& h0, const Tensor& c0);

enum class Activation { identity, relu, tanh, sigmoid, softplus };

Tensor activate(const Tensor& x, Activation act);
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation act);

}  // namespace qivc
