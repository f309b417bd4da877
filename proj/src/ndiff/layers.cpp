#include "tap/ndiff/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace tap::nd {

Linear Linear::create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                      std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(name + ".w", glorot(in, out, rng));
  l.bias = &store.add(name + ".b", Matrix::Zero(1, out));
  return l;
}

Linear Linear::bind(ParameterStore& store, const std::string& name) {
  return {&store.get(name + ".w"), &store.get(name + ".b")};
}

Tensor Linear::operator()(Tape& tape, const Tensor& x) const {
  return add_row(matmul(x, tape.param(*weight)), tape.param(*bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Eigen::Index dim) {
  LayerNorm n;
  n.gain = &store.add(name + ".g", Matrix::Ones(1, dim));
  n.bias = &store.add(name + ".b", Matrix::Zero(1, dim));
  return n;
}

LayerNorm LayerNorm::bind(ParameterStore& store, const std::string& name) {
  return {&store.get(name + ".g"), &store.get(name + ".b")};
}

Tensor LayerNorm::operator()(Tape& tape, const Tensor& x) const {
  return layer_norm(x, tape.param(*gain), tape.param(*bias));
}

Attention Attention::create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                            std::mt19937_64& rng) {
  Attention a;
  a.wq = &store.add(name + ".wq", glorot(dim, dim, rng));
  a.wk = &store.add(name + ".wk", glorot(dim, dim, rng));
  a.wv = &store.add(name + ".wv", glorot(dim, dim, rng));
  a.wo = &store.add(name + ".wo", glorot(dim, dim, rng));
  return a;
}

Attention Attention::bind(ParameterStore& store, const std::string& name) {
  return {&store.get(name + ".wq"), &store.get(name + ".wk"), &store.get(name + ".wv"), &store.get(name + ".wo")};
}

Tensor Attention::operator()(Tape& tape, const Tensor& q, const Tensor& kv, const Mask& mask) const {
  const Eigen::Index d = wq->value.rows();
  if (q.cols() != d || kv.cols() != d) {
    throw std::invalid_argument("attention: model dim " + std::to_string(d) + " vs query " + shape_str(q.value()) +
                                " and key/value " + shape_str(kv.value()));
  }
  const Tensor qp = matmul(q, tape.param(*wq));
  const Tensor kp = matmul(kv, tape.param(*wk));
  const Tensor vp = matmul(kv, tape.param(*wv));
  const Tensor logits = scale(matmul(qp, transpose(kp)), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor weights = softmax_lastdim(logits, mask);
  return add(q, matmul(matmul(weights, vp), tape.param(*wo)));
}

Tensor cross_attention(Tape& tape, const Tensor& q, const Tensor& kv, const Attention& params) {
  return params(tape, q, kv);
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                                Eigen::Index hidden, std::mt19937_64& rng) {
  FeedForward f;
  f.norm = LayerNorm::create(store, name + ".ln", dim);
  f.up = Linear::create(store, name + ".up", dim, hidden, rng);
  f.down = Linear::create(store, name + ".down", hidden, dim, rng);
  return f;
}

FeedForward FeedForward::bind(ParameterStore& store, const std::string& name) {
  return {LayerNorm::bind(store, name + ".ln"), Linear::bind(store, name + ".up"),
          Linear::bind(store, name + ".down")};
}

Tensor FeedForward::operator()(Tape& tape, const Tensor& x) const {
  return add(x, down(tape, relu(up(tape, norm(tape, x)))));
}

RowVector sinusoid(double position, Eigen::Index dim, double base) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoid dim must be positive and even");
  RowVector out(dim);
  const Eigen::Index half = dim / 2;
  for (Eigen::Index k = 0; k < half; ++k) {
    const double freq =
        half > 1 ? std::pow(base, -static_cast<double>(k) / static_cast<double>(half - 1)) : 1.0;
    out(2 * k) = std::sin(position * freq);
    out(2 * k + 1) = std::cos(position * freq);
  }
  return out;
}

Tensor sinusoid(const Tensor& x, Eigen::Index dim, double scale, double base) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoid dim must be positive and even");
  const Matrix& xv = x.value();
  const Eigen::Index half = dim / 2;
  RowVector freq(half);
  for (Eigen::Index k = 0; k < half; ++k) {
    freq(k) = half > 1 ? std::pow(base, -static_cast<double>(k) / static_cast<double>(half - 1)) : 1.0;
  }
  Matrix out(xv.rows(), xv.cols() * dim);
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      for (Eigen::Index k = 0; k < half; ++k) {
        const double a = scale * xv(i, j) * freq(k);
        out(i, j * dim + 2 * k) = std::sin(a);
        out(i, j * dim + 2 * k + 1) = std::cos(a);
      }
    }
  }
  Tape& t = *x.tape();
  const int xi = x.id(), oi = static_cast<int>(t.size());
  return t.record(std::move(out), {x}, [xi, oi, dim, half, scale, freq](Tape& tp) {
    const Matrix& xv = tp.value(xi);
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    Matrix& gx = tp.grad(Tensor(&tp, xi));
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
      for (Eigen::Index j = 0; j < xv.cols(); ++j) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < half; ++k) {
          const double w = scale * freq(k);
          const double a = w * xv(i, j);
          acc += w * (g(i, j * dim + 2 * k) * std::cos(a) - g(i, j * dim + 2 * k + 1) * std::sin(a));
        }
        gx(i, j) += acc;
      }
    }
  });
}

}  // namespace tap::nd
