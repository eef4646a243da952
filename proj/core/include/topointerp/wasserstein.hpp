#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "topointerp/persistence.hpp"

namespace topointerp {

struct WassersteinOptions {
  double q = 2.0;
  /// Infinite bars are cropped to the data range so they live in the
  /// birth-death plane: an InfMin bar becomes (birth, crop_high) and an
  /// InfMax bar (crop_low, birth). Two infinite points of a class then cost
  /// |birth difference|, and a surplus infinite point can reach the
  /// diagonal. Without cropping, infinite classes must match one-to-one.
  bool crop_infinite = true;
  double crop_low = 0.0;
  double crop_high = 1.0;
};

inline constexpr std::size_t kDiagonal = std::numeric_limits<std::size_t>::max();

struct MatchedPair {
  std::size_t source = kDiagonal;  // index into the first diagram's pairs
  std::size_t target = kDiagonal;  // index into the second diagram's pairs
  double cost = 0.0;               // Euclidean distance in the birth-death plane

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct DiagramMatching {
  std::vector<MatchedPair> assignments;
  double q = 2.0;
  double cost_sum = 0.0;  // sum of cost^q over assignments
  double distance = 0.0;  // cost_sum^(1/q)
};

struct PlanePoint {
  double birth = 0.0;
  double death = 0.0;
};

/// Position of a pair in the birth-death plane (cropping infinite bars).
PlanePoint plane_point(const PersistencePair& pair, const WassersteinOptions& options = {});

std::pair<double, double> diagonal_projection(double birth, double death);

/// Euclidean distance from a plane point to its diagonal projection.
double diagonal_distance(const PlanePoint& p);

/// Optimal augmented assignment between two diagrams, solved independently
/// per pair class (MinSaddle, SaddleMax, InfMin, InfMax) and summed before
/// the q-th root. `source_active`, when given, marks source pairs taking part
/// in the assignment; inactive ones are sent to the diagonal.
DiagramMatching match_diagrams(const PersistenceDiagram& source, const PersistenceDiagram& target,
                               const WassersteinOptions& options = {},
                               const std::vector<bool>& source_active = {});

/// W_q distance plus its matching.
std::pair<double, DiagramMatching> wasserstein_distance(const PersistenceDiagram& a,
                                                        const PersistenceDiagram& b,
                                                        const WassersteinOptions& options = {});

/// W_q(a, b) / (W_q(a, {})^q + W_q({}, b)^q)^(1/q), in [0, 1]. Two empty
/// diagrams give 0 (a warning is logged).
double normalized_wasserstein(const PersistenceDiagram& a, const PersistenceDiagram& b,
                              const WassersteinOptions& options = {});

}  // namespace topointerp
