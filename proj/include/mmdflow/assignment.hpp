#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mmdflow {

// Exact linear assignment by shortest augmenting paths with dual potentials
// (Jonker-Volgenant style), O(n^3).  Deterministic: ties are broken by the
// first strictly better column.
inline double solve_assignment(const Eigen::Ref<const Eigen::MatrixXd>& cost,
                               std::vector<int>* row_to_col = nullptr) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_assignment: square cost required");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0);  // match[j] = row assigned to column j (1-based)
  std::vector<int> way(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  if (row_to_col) row_to_col->assign(n, -1);
  for (int j = 1; j <= n; ++j) {
    total += cost(match[j] - 1, j - 1);
    if (row_to_col) (*row_to_col)[match[j] - 1] = j - 1;
  }
  return total;
}

}  // namespace mmdflow
