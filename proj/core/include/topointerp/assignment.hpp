#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace topointerp {

/// Dense row-major square cost matrix.
class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}
  CostMatrix(std::size_t n, std::vector<double> data);

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * n_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * n_ + c]; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

enum class TieBreak { None, Lexicographic };

/// Exact minimum-cost perfect matching (shortest augmenting path Hungarian
/// method, O(n^3)). Returns column assigned to each row. With
/// TieBreak::Lexicographic the lexicographically smallest optimal
/// permutation is returned; ties are judged with a relative tolerance.
std::vector<std::size_t> assignment_solve(const CostMatrix& cost,
                                          TieBreak tie_break = TieBreak::Lexicographic);

double assignment_cost(const CostMatrix& cost, std::span<const std::size_t> permutation);

}  // namespace topointerp
