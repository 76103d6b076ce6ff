#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "infocluster/error.hpp"

namespace infocluster {

/// Minimum-cost assignment of every row to a distinct column for an
/// n×m cost matrix with n ≤ m (row-major, `cost[i * m + j]`).
/// Shortest augmenting path with potentials, O(n²m). Returns the column of
/// each row.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, int n, int m) {
  if (n > m) throw Error(ErrorCode::SizeMismatch, "assignment needs rows <= columns");
  if (cost.size() != static_cast<size_t>(n) * m)
    throw Error(ErrorCode::SizeMismatch, "cost matrix has wrong size");
  constexpr double inf = std::numeric_limits<double>::infinity();

  // 1-based: row_of[j] is the row matched to column j, 0 = none.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), min_slack(m + 1);
  std::vector<int> row_of(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);

  for (int i = 1; i <= n; ++i) {
    row_of[0] = i;
    int j0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = row_of[j0];
      const double* row = cost.data() + static_cast<size_t>(i0 - 1) * m;
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j)
    if (row_of[j] != 0) col_of_row[row_of[j] - 1] = j - 1;
  return col_of_row;
}

}  // namespace infocluster
