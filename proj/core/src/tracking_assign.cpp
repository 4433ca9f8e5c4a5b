#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rdpv/tracking.hpp"

namespace rdpv::track {

namespace {

// Shortest-augmenting-path assignment with potentials, O(n^2 m).
// Requires n <= m; returns match[row] = col (1-indexed internally).
std::vector<int> solve_rect(const std::vector<std::vector<double>>& a, int n,
                            int m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
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
  std::vector<int> match(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  }
  return match;
}

}  // namespace

Assignment solve_assignment(const CostMatrix& cost) {
  Assignment out;
  if (cost.rows == 0 || cost.cols == 0) {
    for (int r = 0; r < cost.rows; ++r) out.unmatched_rows.push_back(r);
    for (int c = 0; c < cost.cols; ++c) out.unmatched_cols.push_back(c);
    return out;
  }
  for (const double c : cost.cost) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw std::invalid_argument("solve_assignment: costs must be finite and >= 0");
    }
  }

  const bool transposed = cost.rows > cost.cols;
  const int n = transposed ? cost.cols : cost.rows;
  const int m = transposed ? cost.rows : cost.cols;
  std::vector<std::vector<double>> a(n, std::vector<double>(m));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      a[i][j] = transposed ? cost.at(j, i) : cost.at(i, j);
    }
  }
  const std::vector<int> match = solve_rect(a, n, m);

  std::vector<char> row_used(cost.rows, 0), col_used(cost.cols, 0);
  for (int i = 0; i < n; ++i) {
    if (match[i] < 0) continue;
    const int r = transposed ? match[i] : i;
    const int c = transposed ? i : match[i];
    // a forced gated pairing counts as no assignment
    if (cost.at(r, c) >= CostMatrix::kGated * 0.5) continue;
    out.pairs.emplace_back(r, c);
    row_used[r] = 1;
    col_used[c] = 1;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (int r = 0; r < cost.rows; ++r) {
    if (!row_used[r]) out.unmatched_rows.push_back(r);
  }
  for (int c = 0; c < cost.cols; ++c) {
    if (!col_used[c]) out.unmatched_cols.push_back(c);
  }
  return out;
}

}  // namespace rdpv::track
