#include "sentgraph/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sentgraph {

Matching hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return Matching{};
  const int m = static_cast<int>(cost[0].size());
  if (n > m) {
    throw std::invalid_argument("hungarian: more rows than columns (" +
                                std::to_string(n) + " > " + std::to_string(m) + ")");
  }
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) {
      throw std::invalid_argument("hungarian: ragged cost matrix");
    }
    for (double c : row) {
      if (!std::isfinite(c)) {
        throw std::invalid_argument("hungarian: non-finite cost entry");
      }
    }
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based with column 0 as sentinel. col_row[j] = row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> col_row(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    col_row[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = col_row[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        // Strict < keeps the lowest column index on ties.
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[col_row[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_row[j0] != 0);
    do {
      int j1 = way[j0];
      col_row[j0] = col_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Matching result;
  result.assignment.assign(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (col_row[j] > 0) result.assignment[col_row[j] - 1] = j - 1;
  }
  for (int i = 0; i < n; ++i) {
    result.total_cost += cost[i][result.assignment[i]];
  }
  return result;
}

}  // namespace sentgraph
