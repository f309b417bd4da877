#include "tap/setpred.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tap {

LossWeights::LossWeights(double seg, double span) : lambda_seg(seg), lambda_span(span) {
  if (!(seg >= 0.0) || !(span >= 0.0)) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
}

std::vector<int> Assignment::prediction_for_truth() const {
  std::vector<int> out(pairs.size(), -1);
  for (const auto& [p, t] : pairs) out.at(static_cast<std::size_t>(t)) = p;
  return out;
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Jacobian of a clamped endpoint c + k*d with respect to (c, d).
Eigen::Vector2d endpoint_jacobian(double c, double d, double k) {
  const double raw = c + k * d;
  if (raw <= 0.0 || raw >= 1.0) return Eigen::Vector2d::Zero();
  return {1.0, k};
}

struct SquareSolution {
  std::vector<int> col_for_row;
  double cost = 0.0;
};

// O(n^3) shortest augmenting path with potentials. Rows are assigned in order.
SquareSolution solve_square(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  SquareSolution s;
  s.col_for_row.assign(n, -1);
  for (int j = 1; j <= n; ++j) s.col_for_row[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) s.cost += a(i, s.col_for_row[i]);
  return s;
}

// Optimal assignment of the given columns to distinct rows; returns row per column.
std::vector<int> solve_rect(const Eigen::Ref<const Eigen::MatrixXd>& cost, const std::vector<int>& rows,
                            const std::vector<int>& cols, double* total) {
  const int m = static_cast<int>(rows.size());
  const int n = static_cast<int>(cols.size());
  std::vector<int> row_for_col(n, -1);
  if (n == 0) {
    *total = 0.0;
    return row_for_col;
  }
  double max_entry = 0.0;
  for (int r : rows)
    for (int c : cols) max_entry = std::max(max_entry, cost(r, c));
  const double sentinel = 1.0 + max_entry;
  Eigen::MatrixXd square = Eigen::MatrixXd::Constant(m, m, sentinel);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) square(i, j) = cost(rows[i], cols[j]);
  const SquareSolution s = solve_square(square);
  *total = 0.0;
  for (int i = 0; i < m; ++i) {
    const int j = s.col_for_row[i];
    if (j < n) {
      row_for_col[j] = rows[i];
      *total += cost(rows[i], cols[j]);
    }
  }
  return row_for_col;
}

}  // namespace

double pair_cost(const TemporalAnchor& pred, const TemporalAnchor& truth, const LossWeights& w) {
  const double seg = std::abs(pred.center() - truth.center()) + std::abs(pred.duration() - truth.duration());
  const double span = 1.0 - hull_overlap_ratio(span_from_anchor(pred), span_from_anchor(truth));
  return w.lambda_seg * seg + w.lambda_span * span;
}

Eigen::Vector2d pair_cost_grad(const TemporalAnchor& pred, const TemporalAnchor& truth,
                               const LossWeights& w) {
  Eigen::Vector2d g(w.lambda_seg * sign(pred.center() - truth.center()),
                    w.lambda_seg * sign(pred.duration() - truth.duration()));

  const TimeSpan ps = span_from_anchor(pred);
  const TimeSpan ts = span_from_anchor(truth);
  const double inter = std::min(ps.end(), ts.end()) - std::max(ps.start(), ts.start());
  const double hull = std::max(ps.end(), ts.end()) - std::min(ps.start(), ts.start());
  if (inter <= 0.0 || hull <= 0.0) return g;

  // Partial derivatives of intersection and hull with respect to the predicted endpoints.
  const double di_ds = ps.start() > ts.start() ? -1.0 : 0.0;
  const double di_de = ps.end() < ts.end() ? 1.0 : 0.0;
  const double dh_ds = ps.start() < ts.start() ? -1.0 : 0.0;
  const double dh_de = ps.end() > ts.end() ? 1.0 : 0.0;
  const double dr_ds = (di_ds * hull - inter * dh_ds) / (hull * hull);
  const double dr_de = (di_de * hull - inter * dh_de) / (hull * hull);

  const Eigen::Vector2d js = endpoint_jacobian(pred.center(), pred.duration(), -0.5);
  const Eigen::Vector2d je = endpoint_jacobian(pred.center(), pred.duration(), 0.5);
  g -= w.lambda_span * (dr_ds * js + dr_de * je);
  return g;
}

CostMatrix pairwise_cost(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                         const LossWeights& w) {
  if (truths.empty()) throw std::invalid_argument("sample has no ground-truth events");
  if (preds.size() < truths.size()) {
    throw std::invalid_argument("fewer predictions (" + std::to_string(preds.size()) +
                                ") than ground truths (" + std::to_string(truths.size()) + ")");
  }
  CostMatrix c(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(truths.size()));
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < truths.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pair_cost(preds[i], truths[j], w);
  return c;
}

Assignment hungarian_match(const Eigen::Ref<const Eigen::MatrixXd>& cost) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (m < n) throw std::invalid_argument("cost matrix needs rows >= cols");
  if (!cost.allFinite()) throw std::invalid_argument("cost matrix has a non-finite entry");

  std::vector<int> rows(m), cols(n);
  for (int i = 0; i < m; ++i) rows[i] = i;
  for (int j = 0; j < n; ++j) cols[j] = j;
  double best = 0.0;
  std::vector<int> sol = solve_rect(cost, rows, cols, &best);
  const double tol = 1e-10 * std::max(1.0, std::abs(best));

  // Walk ground truths in order and pin each to the lowest prediction index that still
  // admits an optimal completion.
  std::vector<char> row_used(m, 0);
  double fixed_cost = 0.0;
  for (int j = 0; j < n; ++j) {
    std::vector<int> rest_cols(cols.begin() + j + 1, cols.end());
    for (int i = 0; i < sol[j]; ++i) {
      if (row_used[i]) continue;
      std::vector<int> rest_rows;
      for (int r = 0; r < m; ++r)
        if (!row_used[r] && r != i) rest_rows.push_back(r);
      double rest = 0.0;
      const std::vector<int> tail = solve_rect(cost, rest_rows, rest_cols, &rest);
      if (fixed_cost + cost(i, j) + rest <= best + tol) {
        sol[j] = i;
        for (int k = j + 1; k < n; ++k) sol[k] = tail[k - j - 1];
        break;
      }
    }
    row_used[sol[j]] = 1;
    fixed_cost += cost(sol[j], j);
  }

  Assignment a;
  a.pairs.reserve(n);
  for (int j = 0; j < n; ++j) a.pairs.emplace_back(sol[j], j);
  return a;
}

double assignment_cost(const Eigen::Ref<const Eigen::MatrixXd>& cost, const Assignment& a) {
  double total = 0.0;
  for (const auto& [p, t] : a.pairs) total += cost(p, t);
  return total;
}

AnchorLoss anchor_loss(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                       const LossWeights& w) {
  const CostMatrix c = pairwise_cost(preds, truths, w);
  AnchorLoss out;
  out.assignment = hungarian_match(c);
  out.value = assignment_cost(c, out.assignment);
  return out;
}

double anchor_loss_at(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                      const LossWeights& w, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [p, t] : assignment.pairs)
    total += pair_cost(preds[static_cast<std::size_t>(p)], truths[static_cast<std::size_t>(t)], w);
  return total;
}

AnchorGrad anchor_loss_grad(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                            const LossWeights& w, const Assignment& assignment) {
  AnchorGrad g = AnchorGrad::Zero(static_cast<Eigen::Index>(preds.size()), 2);
  for (const auto& [p, t] : assignment.pairs) {
    g.row(p) += pair_cost_grad(preds[static_cast<std::size_t>(p)], truths[static_cast<std::size_t>(t)], w)
                    .transpose();
  }
  return g;
}

}  // namespace tap
