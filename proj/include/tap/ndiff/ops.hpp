#pragma once

#include <span>
#include <vector>

#include "tap/ndiff/tensor.hpp"

namespace tap::nd {

/// Boolean attention mask, 1 where attending is allowed.
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Adds a 1 x n row to every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax_lastdim(const Tensor& a);
/// Softmax over allowed entries of each row; disallowed entries are exactly 0.
/// Every row must allow at least one column.
Tensor softmax_lastdim(const Tensor& a, const Mask& mask);
/// Per-row normalization followed by elementwise gain and bias (both 1 x n).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor embed_lookup(const Tensor& table, std::span<const int> indices);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
/// Gathers rows in the given order.
Tensor gather_rows(const Tensor& a, std::span<const int> rows);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean cross-entropy of softmax(logits.row(rows[k])) against targets[k].
Tensor cross_entropy(const Tensor& logits, std::span<const int> rows, std::span<const int> targets);

/// Scalar node with a caller-supplied value and gradient with respect to `x`. Lets losses
/// with analytic subgradients join the tape.
Tensor custom_scalar(const Tensor& x, double value, Matrix dvalue_dx);

}  // namespace tap::nd
