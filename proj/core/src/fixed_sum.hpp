#pragma once

#include <cstddef>

namespace topointerp::detail {

// Reductions with a summation order that depends only on n. Vectorised
// reductions may peel by pointer alignment, which makes results differ
// between otherwise identical runs.
inline constexpr std::size_t kLanes = 8;

inline double fold_lanes(const double* acc) {
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

inline double fixed_dot(const double* a, const double* b, std::size_t n) {
  double acc[kLanes] = {};
  const std::size_t body = n - n % kLanes;
  for (std::size_t i = 0; i < body; i += kLanes) {
#pragma omp simd
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  double tail = 0.0;
  for (std::size_t i = body; i < n; ++i) tail += a[i] * b[i];
  return fold_lanes(acc) + tail;
}

inline double fixed_sum(const double* a, std::size_t n) {
  double acc[kLanes] = {};
  const std::size_t body = n - n % kLanes;
  for (std::size_t i = 0; i < body; i += kLanes) {
#pragma omp simd
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l];
  }
  double tail = 0.0;
  for (std::size_t i = body; i < n; ++i) tail += a[i];
  return fold_lanes(acc) + tail;
}

}  // namespace topointerp::detail
