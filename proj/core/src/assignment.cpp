#include "topointerp/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "topointerp/error.hpp"

namespace topointerp {

CostMatrix::CostMatrix(std::size_t n, std::vector<double> data) : n_(n), data_(std::move(data)) {
  if (data_.size() != n * n) throw Error(ErrorCode::ShapeMismatch, "cost matrix is not square");
}

double assignment_cost(const CostMatrix& cost, std::span<const std::size_t> permutation) {
  double total = 0.0;
  for (std::size_t r = 0; r < permutation.size(); ++r) total += cost(r, permutation[r]);
  return total;
}

namespace {

struct HungarianResult {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
};

// Potentials-based Hungarian method; rows are inserted one at a time and
// matched along a shortest augmenting path in reduced costs.
HungarianResult hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based with column 0 as the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
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
      for (std::size_t j = 0; j <= n; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult out;
  out.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.row_to_col[p[j] - 1] = j - 1;
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  return out;
}

// Every optimal assignment lives in the equality subgraph of an optimal dual
// solution, and any perfect matching there is optimal. So the
// lexicographically smallest optimum is found greedily row by row, moving
// row i to the smallest tight column that still admits a perfect matching of
// the remaining rows (an alternating path through rows > i).
void lexicographic_refine(const CostMatrix& cost, HungarianResult& h) {
  const std::size_t n = cost.size();
  double scale = 0.0;
  for (double c : cost.data()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-12 * std::max(1.0, scale) * static_cast<double>(n);
  auto tight = [&](std::size_t r, std::size_t c) {
    return cost(r, c) - h.u[r] - h.v[c] <= tol;
  };
  auto& match = h.row_to_col;
  std::vector<std::size_t> col_owner(n);
  for (std::size_t r = 0; r < n; ++r) col_owner[match[r]] = r;

  std::vector<std::size_t> parent_row(n);
  std::vector<char> visited_col(n);
  std::vector<std::size_t> queue;
  queue.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < match[i]; ++j) {
      if (!tight(i, j)) continue;
      // Row r = owner of j must move; search for an alternating path from r
      // to the column freed by i, through rows > i only.
      const std::size_t target = match[i];
      const std::size_t start = col_owner[j];
      if (start <= i) continue;
      std::fill(visited_col.begin(), visited_col.end(), 0);
      queue.assign(1, start);
      visited_col[j] = 1;
      bool found = false;
      std::size_t found_row = 0;
      for (std::size_t head = 0; head < queue.size() && !found; ++head) {
        const std::size_t r = queue[head];
        for (std::size_t c = 0; c < n; ++c) {
          if (visited_col[c] || !tight(r, c)) continue;
          visited_col[c] = 1;
          parent_row[c] = r;
          if (c == target) {
            found = true;
            found_row = r;
            break;
          }
          const std::size_t owner = col_owner[c];
          if (owner > i) queue.push_back(owner);
        }
      }
      if (!found) continue;
      // Walk back: each row on the path takes the column it reached.
      std::size_t c = target;
      std::size_t r = found_row;
      while (true) {
        const std::size_t previous = match[r];
        match[r] = c;
        col_owner[c] = r;
        if (r == start) break;
        c = previous;
        r = parent_row[c];
      }
      match[i] = j;
      col_owner[j] = i;
      break;
    }
  }
}

}  // namespace

std::vector<std::size_t> assignment_solve(const CostMatrix& cost, TieBreak tie_break) {
  if (cost.size() == 0) return {};
  for (double c : cost.data()) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "cost matrix must be finite");
  }
  auto result = hungarian(cost);
  if (tie_break == TieBreak::Lexicographic) lexicographic_refine(cost, result);
  return result.row_to_col;
}

}  // namespace topointerp
