#pragma once

#include <random>
#include <string>

#include "tap/ndiff/ops.hpp"
#include "tap/ndiff/tensor.hpp"

namespace tap::nd {

/// y = x W + b, with W stored fan_in x fan_out.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                       std::mt19937_64& rng);
  /// Rebinds to parameters already present in `store`.
  static Linear bind(ParameterStore& store, const std::string& name);
  Tensor operator()(Tape& tape, const Tensor& x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index dim);
  static LayerNorm bind(ParameterStore& store, const std::string& name);
  Tensor operator()(Tape& tape, const Tensor& x) const;
};

/// Single-head attention with output projection and residual:
///   q + softmax(q Wq (kv Wk)^T / sqrt(d) [masked]) (kv Wv) Wo
struct Attention {
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;

  static Attention create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                          std::mt19937_64& rng);
  static Attention bind(ParameterStore& store, const std::string& name);
  Tensor operator()(Tape& tape, const Tensor& q, const Tensor& kv, const Mask& mask = Mask()) const;
};

Tensor cross_attention(Tape& tape, const Tensor& q, const Tensor& kv, const Attention& params);

/// x + W2 relu(W1 LN(x) + b1) + b2
struct FeedForward {
  LayerNorm norm;
  Linear up;
  Linear down;

  static FeedForward create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                            Eigen::Index hidden, std::mt19937_64& rng);
  static FeedForward bind(ParameterStore& store, const std::string& name);
  Tensor operator()(Tape& tape, const Tensor& x) const;
};

/// Sinusoidal features of a scalar position; `dim` must be even.
/// Pairs (sin, cos) at geometric frequencies from 1 down to 1/base.
RowVector sinusoid(double position, Eigen::Index dim, double base);

/// Differentiable sinusoid of every entry of `x` (n x k), evaluated at `scale * x`.
/// Output is n x (k * dim); column block j holds the features of x(:, j).
Tensor sinusoid(const Tensor& x, Eigen::Index dim, double scale, double base);

}  // namespace tap::nd
