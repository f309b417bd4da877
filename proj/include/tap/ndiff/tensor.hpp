#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tap::nd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Shape = std::array<Eigen::Index, 2>;

std::string shape_str(const Matrix& m);

/// A named trainable array that outlives any tape.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v);
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  void zero_grad();
  std::size_t size() const { return params_.size(); }

 private:
  std::deque<Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while its tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Shape shape() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Ordered record of executed operations. Node order is a topological order, so
/// backward walks it in reverse once.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  /// Leaf that reads a parameter; backward accumulates into `p.grad`.
  Tensor param(Parameter& p);
  /// Leaf that is differentiable but not tied to a parameter.
  Tensor variable(Matrix value);

  /// Records an op output. `backward` is dropped when no input requires grad.
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, Backward backward);
  Tensor record(Matrix value, const std::vector<Tensor>& inputs, Backward backward);

  /// Populates gradients of `loss` (1x1) with respect to every node and adds them into
  /// the parameters read by this tape. Can be called repeatedly for different losses.
  void backward(const Tensor& loss);

  const Matrix& value(const Tensor& t) const { return nodes_[t.id()].value; }
  const Matrix& value(int id) const { return nodes_[id].value; }
  Matrix& grad(const Tensor& t) { return nodes_[t.id()].grad; }
  const Matrix& grad(const Tensor& t) const { return nodes_[t.id()].grad; }
  bool requires_grad(const Tensor& t) const { return nodes_[t.id()].requires_grad; }

  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

/// Normal(0, stddev) initialized matrix.
Matrix randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);
/// Uniform Glorot initialization for a fan_in x fan_out weight.
Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

}  // namespace tap::nd
