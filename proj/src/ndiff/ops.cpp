#include "tap/ndiff/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tap::nd {
namespace {

void require_same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("tensors live on different tapes");
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                                shape_str(b.value()));
  }
}

Matrix softmax_rows(const Matrix& x, const Mask* mask) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!mask || (*mask)(i, j)) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw std::invalid_argument("softmax row " + std::to_string(i) + " fully masked");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask && !(*mask)(i, j)) continue;
      out(i, j) = std::exp(x(i, j) - mx);
      z += out(i, j);
    }
    out.row(i) /= z;
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Tape& t = *a.tape();
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  return t.record(a.value() * b.value(), {a, b}, [ai, bi, oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    if (tp.requires_grad(Tensor(&tp, ai))) tp.grad(Tensor(&tp, ai)).noalias() += g * tp.value(bi).transpose();
    if (tp.requires_grad(Tensor(&tp, bi))) tp.grad(Tensor(&tp, bi)).noalias() += tp.value(ai).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  return t.record(a.value().transpose(), {a}, [ai, oi](Tape& tp) {
    tp.grad(Tensor(&tp, ai)) += tp.grad(Tensor(&tp, oi)).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape("add", a, b);
  Tape& t = *a.tape();
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  return t.record(a.value() + b.value(), {a, b}, [ai, bi, oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    if (tp.requires_grad(Tensor(&tp, ai))) tp.grad(Tensor(&tp, ai)) += g;
    if (tp.requires_grad(Tensor(&tp, bi))) tp.grad(Tensor(&tp, bi)) += g;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape("sub", a, b);
  Tape& t = *a.tape();
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  return t.record(a.value() - b.value(), {a, b}, [ai, bi, oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    if (tp.requires_grad(Tensor(&tp, ai))) tp.grad(Tensor(&tp, ai)) += g;
    if (tp.requires_grad(Tensor(&tp, bi))) tp.grad(Tensor(&tp, bi)) -= g;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: shape mismatch " + shape_str(a.value()) + " + " + shape_str(row.value()));
  }
  Tape& t = *a.tape();
  const int ai = a.id(), ri = row.id(), oi = static_cast<int>(t.size());
  Matrix y = a.value();
  y.rowwise() += row.value().row(0);
  return t.record(std::move(y), {a, row}, [ai, ri, oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    if (tp.requires_grad(Tensor(&tp, ai))) tp.grad(Tensor(&tp, ai)) += g;
    if (tp.requires_grad(Tensor(&tp, ri))) tp.grad(Tensor(&tp, ri)) += g.colwise().sum();
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_tape(a, b);
  require_same_shape("mul", a, b);
  Tape& t = *a.tape();
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ai, bi, oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    if (tp.requires_grad(Tensor(&tp, ai))) tp.grad(Tensor(&tp, ai)) += g.cwiseProduct(tp.value(bi));
    if (tp.requires_grad(Tensor(&tp, bi))) tp.grad(Tensor(&tp, bi)) += g.cwiseProduct(tp.value(ai));
  });
}

Tensor scale(const Tensor& a, double s) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  return t.record(a.value() * s, {a}, [ai, oi, s](Tape& tp) {
    tp.grad(Tensor(&tp, ai)) += s * tp.grad(Tensor(&tp, oi));
  });
}

Tensor relu(const Tensor& a) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  return t.record(a.value().cwiseMax(0.0), {a}, [ai, oi](Tape& tp) {
    const Matrix& x = tp.value(ai);
    tp.grad(Tensor(&tp, ai)) += tp.grad(Tensor(&tp, oi)).cwiseProduct(
        x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  });
}

Tensor sigmoid(const Tensor& a) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  Matrix y = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return t.record(std::move(y), {a}, [ai, oi](Tape& tp) {
    const Matrix& s = tp.value(oi);
    tp.grad(Tensor(&tp, ai)) += tp.grad(Tensor(&tp, oi)).cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  });
}

Tensor softmax_lastdim(const Tensor& a) { return softmax_lastdim(a, Mask()); }

Tensor softmax_lastdim(const Tensor& a, const Mask& mask) {
  const bool masked = mask.size() != 0;
  if (masked && (mask.rows() != a.rows() || mask.cols() != a.cols())) {
    throw std::invalid_argument("softmax mask shape [" + std::to_string(mask.rows()) + "x" +
                                std::to_string(mask.cols()) + "] vs input " + shape_str(a.value()));
  }
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  return t.record(softmax_rows(a.value(), masked ? &mask : nullptr), {a}, [ai, oi](Tape& tp) {
    const Matrix& y = tp.value(oi);
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    // dx = y * (g - sum(g * y)) row-wise; masked entries have y == 0.
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct((g.colwise() - dots));
    tp.grad(Tensor(&tp, ai)) += dx;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::invalid_argument("layer_norm: shape mismatch " + shape_str(x.value()) + " gain " +
                                shape_str(gain.value()) + " bias " + shape_str(bias.value()));
  }
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  const int xi = x.id(), gi = gain.id(), bi = bias.id(), oi = static_cast<int>(t.size());
  return t.record(std::move(y), {x, gain, bias},
                  [xi, gi, bi, oi, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp) {
                    const Matrix& g = tp.grad(Tensor(&tp, oi));
                    const RowVector gv = tp.value(gi).row(0);
                    if (tp.requires_grad(Tensor(&tp, gi)))
                      tp.grad(Tensor(&tp, gi)) += g.cwiseProduct(xhat).colwise().sum();
                    if (tp.requires_grad(Tensor(&tp, bi))) tp.grad(Tensor(&tp, bi)) += g.colwise().sum();
                    if (tp.requires_grad(Tensor(&tp, xi))) {
                      const double n = static_cast<double>(xhat.cols());
                      Matrix gx = g.array().rowwise() * gv.array();
                      Matrix dx(gx.rows(), gx.cols());
                      for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                        const double m1 = gx.row(i).mean();
                        const double m2 = gx.row(i).cwiseProduct(xhat.row(i)).sum() / n;
                        dx.row(i) = inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2);
                      }
                      tp.grad(Tensor(&tp, xi)) += dx;
                    }
                  });
}

Tensor embed_lookup(const Tensor& table, std::span<const int> indices) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix y(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= tv.rows()) {
      throw std::out_of_range("embed_lookup index " + std::to_string(indices[k]) + " outside table " +
                              shape_str(tv));
    }
    y.row(static_cast<Eigen::Index>(k)) = tv.row(indices[k]);
  }
  const int ti = table.id(), oi = static_cast<int>(t.size());
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(y), {table}, [ti, oi, idx = std::move(idx)](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    Matrix& gt = tp.grad(Tensor(&tp, ti));
    for (std::size_t k = 0; k < idx.size(); ++k) gt.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Tape& t = *parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Tensor& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.cols() != cols) {
      throw std::invalid_argument("concat_rows: shape mismatch " + shape_str(parts.front().value()) + " vs " +
                                  shape_str(p.value()));
    }
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const Tensor& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(r);
    r += p.rows();
  }
  const int oi = static_cast<int>(t.size());
  return t.record(std::move(y), parts, [ids = std::move(ids), offsets = std::move(offsets), oi](Tape& tp) {
    const Matrix& g = tp.grad(Tensor(&tp, oi));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor in(&tp, ids[k]);
      if (tp.requires_grad(in)) tp.grad(in) += g.middleRows(offsets[k], tp.value(ids[k]).rows());
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw std::out_of_range("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) +
                            ") outside " + shape_str(a.value()));
  }
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  return t.record(a.value().middleRows(begin, count), {a}, [ai, oi, begin, count](Tape& tp) {
    tp.grad(Tensor(&tp, ai)).middleRows(begin, count) += tp.grad(Tensor(&tp, oi));
  });
}

Tensor gather_rows(const Tensor& a, std::span<const int> rows) { return embed_lookup(a, rows); }

Tensor sum(const Tensor& a) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return t.record(std::move(y), {a}, [ai, oi](Tape& tp) {
    tp.grad(Tensor(&tp, ai)).array() += tp.grad(Tensor(&tp, oi))(0, 0);
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> targets) {
  if (rows.size() != targets.size() || rows.empty()) {
    throw std::invalid_argument("cross_entropy needs matching, non-empty rows and targets");
  }
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  const auto n = static_cast<double>(rows.size());
  Matrix probs(static_cast<Eigen::Index>(rows.size()), z.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (targets[k] < 0 || targets[k] >= z.cols()) throw std::out_of_range("cross_entropy target out of range");
    const auto r = z.row(rows[k]);
    const double mx = r.maxCoeff();
    const double lse = mx + std::log((r.array() - mx).exp().sum());
    loss += lse - r(targets[k]);
    probs.row(static_cast<Eigen::Index>(k)) = (r.array() - lse).exp();
  }
  Matrix y(1, 1);
  y(0, 0) = loss / n;
  const int li = logits.id(), oi = static_cast<int>(t.size());
  std::vector<int> rv(rows.begin(), rows.end()), tv(targets.begin(), targets.end());
  return t.record(std::move(y), {logits},
                  [li, oi, n, rv = std::move(rv), tv = std::move(tv), probs = std::move(probs)](Tape& tp) {
                    const double g = tp.grad(Tensor(&tp, oi))(0, 0) / n;
                    Matrix& gl = tp.grad(Tensor(&tp, li));
                    for (std::size_t k = 0; k < rv.size(); ++k) {
                      gl.row(rv[k]) += g * probs.row(static_cast<Eigen::Index>(k));
                      gl(rv[k], tv[k]) -= g;
                    }
                  });
}

Tensor custom_scalar(const Tensor& x, double value, Matrix dvalue_dx) {
  if (dvalue_dx.rows() != x.rows() || dvalue_dx.cols() != x.cols()) {
    throw std::invalid_argument("custom_scalar: gradient " + shape_str(dvalue_dx) + " vs input " +
                                shape_str(x.value()));
  }
  Tape& t = *x.tape();
  Matrix y(1, 1);
  y(0, 0) = value;
  const int xi = x.id(), oi = static_cast<int>(t.size());
  return t.record(std::move(y), {x}, [xi, oi, d = std::move(dvalue_dx)](Tape& tp) {
    tp.grad(Tensor(&tp, xi)) += tp.grad(Tensor(&tp, oi))(0, 0) * d;
  });
}

}  // namespace tap::nd
