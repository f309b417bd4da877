#include "tap/ndiff/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace tap::nd {

std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

Parameter::Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
  grad = Matrix::Zero(value.rows(), value.cols());
}

Parameter& ParameterStore::add(std::string name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

const Parameter& ParameterStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p.name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

const Matrix& Tensor::value() const { return tape_->value(*this); }
const Matrix& Tensor::grad() const { return tape_->grad(*this); }
Shape Tensor::shape() const { return {value().rows(), value().cols()}; }
bool Tensor::requires_grad() const { return tape_->requires_grad(*this); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("item() on non-scalar " + shape_str(v));
  return v(0, 0);
}

Tensor Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, grad_enabled_, {}, grad_enabled_ ? &p : nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, grad_enabled_, {}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Tensor& t : inputs) needs = needs || nodes_[t.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::record(Matrix value, const std::vector<Tensor>& inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Tensor& t : inputs) needs = needs || nodes_[t.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}, nullptr});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss recorded on a different tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) throw std::invalid_argument("backward needs a scalar loss, got " + shape_str(lv));

  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.setZero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(*this);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Matrix randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace tap::nd
