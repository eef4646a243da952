#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "topointerp/field.hpp"

namespace topointerp {

enum class PairType : std::uint8_t { MinSaddle, SaddleMax, InfMin, InfMax };

std::string_view to_string(PairType type);
std::optional<PairType> parse_pair_type(std::string_view text);

[[nodiscard]] constexpr bool is_infinite(PairType t) noexcept {
  return t == PairType::InfMin || t == PairType::InfMax;
}

/// Maxima-class pairs come from the superlevel sweep.
[[nodiscard]] constexpr bool is_maximum_class(PairType t) noexcept {
  return t == PairType::SaddleMax || t == PairType::InfMax;
}

inline constexpr VertexId kNoVertex = -1;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// A 0-dimensional persistence pair. Finite pairs store birth < death in
/// value: MinSaddle is (minimum, saddle) and SaddleMax is (saddle, maximum).
/// Infinite pairs store the global extremum as birth and +inf as death.
struct PersistencePair {
  PairType kind = PairType::MinSaddle;
  double birth = 0.0;
  double death = 0.0;
  VertexId birth_vertex = kNoVertex;
  VertexId death_vertex = kNoVertex;

  [[nodiscard]] bool infinite() const noexcept { return is_infinite(kind); }
  [[nodiscard]] double persistence() const noexcept { return death - birth; }

  friend bool operator==(const PersistencePair&, const PersistencePair&) = default;
};

struct PersistenceDiagram {
  std::vector<PersistencePair> pairs;
  std::optional<double> source_time;

  [[nodiscard]] std::size_t size() const noexcept { return pairs.size(); }
  [[nodiscard]] bool empty() const noexcept { return pairs.empty(); }
  [[nodiscard]] std::size_t count(PairType kind) const;
};

/// Diagram order: finite points by increasing birth then death, infinite
/// points appended by increasing value. Remaining ties fall back on kind and
/// vertex ids so the order is total.
bool diagram_order_less(const PersistencePair& a, const PersistencePair& b);
void sort_diagram_order(PersistenceDiagram& diagram);

/// 0-dimensional sublevel and superlevel persistence via union-find and the
/// elder rule. Pairs are returned in diagram order.
PersistenceDiagram compute_diagram(const ScalarField& field);

/// Same result as compute_diagram, from scratch component labelling after
/// every insertion. Quadratic; throws OracleTooLarge above 4096 vertices.
PersistenceDiagram brute_force_diagram(const ScalarField& field);

inline constexpr std::int64_t kBruteForceLimit = 4096;

/// Drops finite pairs with persistence below ratio * (largest finite
/// persistence), and always drops zero-persistence pairs. Infinite pairs
/// are kept.
PersistenceDiagram prune(const PersistenceDiagram& diagram, double ratio);

/// Which pairs prune() keeps, as a mask over diagram.pairs.
std::vector<bool> prune_mask(const PersistenceDiagram& diagram, double ratio);

/// Birth vertices of every pair and death vertices of finite pairs, first
/// occurrence wins.
std::vector<std::pair<VertexId, double>> critical_points(const PersistenceDiagram& diagram);

/// Number of compute_diagram calls since process start or the last reset.
/// Training uses it to prove that phase 1 never touches persistence.
std::uint64_t diagram_computation_count();
void reset_diagram_computation_count();

}  // namespace topointerp
