#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tap/temporal.hpp"

namespace tap {

struct LossWeights {
  double lambda_seg = 10.0;
  double lambda_span = 1.0;

  LossWeights() = default;
  LossWeights(double seg, double span);
};

/// Ground truth j is matched to prediction `pairs[k].first` where `pairs[k].second == j`.
/// Pairs are ordered by ground-truth index.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)

  /// Prediction index per ground truth.
  std::vector<int> prediction_for_truth() const;
};

using CostMatrix = Eigen::MatrixXd;
using AnchorGrad = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

/// Matching cost of one prediction against one ground truth.
double pair_cost(const TemporalAnchor& pred, const TemporalAnchor& truth, const LossWeights& w);

/// Subgradient of pair_cost with respect to the prediction's (center, duration).
Eigen::Vector2d pair_cost_grad(const TemporalAnchor& pred, const TemporalAnchor& truth,
                               const LossWeights& w);

/// M x N matrix of pair costs, rows are predictions, columns ground truths.
CostMatrix pairwise_cost(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                         const LossWeights& w);

/// Minimum-cost assignment of every column (ground truth) to a distinct row (prediction).
/// Among equal-cost optima the lexicographically smallest prediction sequence, read in
/// ground-truth order, is returned.
Assignment hungarian_match(const Eigen::Ref<const Eigen::MatrixXd>& cost);

double assignment_cost(const Eigen::Ref<const Eigen::MatrixXd>& cost, const Assignment& a);

struct AnchorLoss {
  double value = 0.0;
  Assignment assignment;
};

AnchorLoss anchor_loss(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                       const LossWeights& w);

/// Loss under a fixed assignment.
double anchor_loss_at(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                      const LossWeights& w, const Assignment& assignment);

/// Per-prediction gradient (d/dcenter, d/dduration) with the assignment held constant.
/// Unmatched predictions get zero rows.
AnchorGrad anchor_loss_grad(std::span<const TemporalAnchor> preds, std::span<const TemporalAnchor> truths,
                            const LossWeights& w, const Assignment& assignment);

}  // namespace tap
