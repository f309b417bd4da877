#include "tap/ndiff/adamw.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tap::nd {

void adamw_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamWConfig& cfg) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw std::invalid_argument("adamw_step: parameter " + shape_str(param) + " vs gradient " + shape_str(grad));
  }
  if (state.m.size() == 0) {
    state.m = Matrix::Zero(param.rows(), param.cols());
    state.v = Matrix::Zero(param.rows(), param.cols());
  }
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  param *= (1.0 - cfg.lr * cfg.weight_decay);
  param.array() -= cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

AdamW::AdamW(std::vector<Parameter*> group, AdamWConfig cfg)
    : group_(std::move(group)), states_(group_.size()), cfg_(cfg) {}

void AdamW::step(double lr) {
  AdamWConfig c = cfg_;
  c.lr = lr;
  for (std::size_t i = 0; i < group_.size(); ++i) adamw_step(group_[i]->value, group_[i]->grad, states_[i], c);
}

void AdamW::zero_grad() {
  for (Parameter* p : group_) p->zero_grad();
}

double step_lr(double base, int epoch, int step_size, double gamma) {
  if (step_size <= 0) return base;
  return base * std::pow(gamma, static_cast<double>(epoch / step_size));
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace tap::nd
