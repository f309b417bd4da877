#pragma once

#include <span>
#include <unordered_map>

#include "tap/ndiff/tensor.hpp"

namespace tap::nd {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Matrix m;
  Matrix v;
  long step = 0;
};

/// One decoupled-weight-decay Adam update of `param` in place.
void adamw_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamWConfig& cfg);

/// AdamW over a fixed parameter group; moment state is kept per parameter.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> group, AdamWConfig cfg);

  /// Applies one update with learning rate `lr` (overrides the configured one).
  void step(double lr);
  void step() { step(cfg_.lr); }
  void zero_grad();

  const AdamWConfig& config() const { return cfg_; }
  std::span<Parameter* const> group() const { return group_; }

 private:
  std::vector<Parameter*> group_;
  std::vector<AdamState> states_;
  AdamWConfig cfg_;
};

/// Piecewise-constant decay: lr * gamma^(floor(epoch / step_size)).
double step_lr(double base, int epoch, int step_size, double gamma);
/// Cosine annealing from base to 0 over `total` steps.
double cosine_lr(double base, long step, long total);

}  // namespace tap::nd
