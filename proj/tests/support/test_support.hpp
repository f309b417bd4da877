#pragma once

// Test-only oracles: central finite differences and exhaustive enumeration. Nothing here
// calls into the code paths under test except through the function being differentiated.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

namespace tap::testing {

using DMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const DMatrix& a, const DMatrix& b, double floor = 1e-8) {
  const double denom = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / denom;
}

/// Central differences of f with respect to every entry of x. x is restored on return.
inline DMatrix numeric_grad(const std::function<double()>& f, DMatrix& x, double h) {
  DMatrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Minimum total cost over all injective column -> row maps, by enumeration.
inline double brute_force_min_assignment(const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  double best = std::numeric_limits<double>::infinity();
  std::vector<char> used(m, 0);
  std::function<void(int, double)> rec = [&](int col, double acc) {
    if (col == n) {
      best = std::min(best, acc);
      return;
    }
    for (int r = 0; r < m; ++r) {
      if (used[r]) continue;
      used[r] = 1;
      rec(col + 1, acc + cost(r, col));
      used[r] = 0;
    }
  };
  rec(0, 0.0);
  return best;
}

/// Maximum total gain over strictly increasing (pred, truth) index chains, by enumeration
/// of every subset of pairs.
inline double brute_force_monotone_matching(const Eigen::MatrixXd& gain) {
  const int m = static_cast<int>(gain.rows());
  const int n = static_cast<int>(gain.cols());
  double best = 0.0;
  std::function<void(int, int, double)> rec = [&](int i0, int j0, double acc) {
    best = std::max(best, acc);
    for (int i = i0; i < m; ++i)
      for (int j = j0; j < n; ++j) rec(i + 1, j + 1, acc + gain(i, j));
  };
  rec(0, 0, 0.0);
  return best;
}

}  // namespace tap::testing
