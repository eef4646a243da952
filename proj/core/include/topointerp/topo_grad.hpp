#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "topointerp/field.hpp"
#include "topointerp/persistence.hpp"
#include "topointerp/wasserstein.hpp"

namespace topointerp {

/// Vertex-level filtration maps of a field and its diagram.
///
/// `order` is the global vertex order (the filtration restricted to
/// vertices). `points` lists diagram pair indices in diagram order and
/// `backward[i]` holds the vertices realizing the birth and death of the i-th
/// point in that order (death is kNoVertex for infinite points).
struct FiltrationMaps {
  struct PointVertices {
    VertexId birth = kNoVertex;
    VertexId death = kNoVertex;
  };

  std::vector<VertexId> order;
  std::vector<std::size_t> points;
  std::vector<PointVertices> backward;
  std::vector<std::size_t> position_of_pair;  // inverse of `points`
};

/// Sparse vertex -> gradient map.
using VertexGradient = std::map<VertexId, double>;

/// Throws InconsistentDiagram if a recorded vertex value disagrees with the
/// diagram coordinate by more than 1e-12.
FiltrationMaps build_maps(const ScalarField& field, const PersistenceDiagram& diagram);

/// Gradient of the matched cost sum W_2^2 with respect to vertex values,
/// holding the matching and vertex order fixed. Each point moves toward its
/// partner (or its diagonal projection); coordinates that are cropped
/// constants receive nothing.
VertexGradient wasserstein_gradient(const PersistenceDiagram& current,
                                    const PersistenceDiagram& target,
                                    const DiagramMatching& matching, const FiltrationMaps& maps,
                                    const WassersteinOptions& options = {});

/// W_2 value of a matching (q-th root of its cost sum).
double loss_value_w2(const PersistenceDiagram& current, const PersistenceDiagram& target,
                     const DiagramMatching& matching);

/// Value and vertex gradient of W_2 itself: the squared-form gradient scaled
/// by 1 / (2 W_2), and zero when W_2 = 0.
struct TopologicalFit {
  double w2 = 0.0;
  DiagramMatching matching;
  VertexGradient gradient;
  std::size_t pruned_pairs = 0;
};

/// Fits a field's full diagram to a target: pairs of `current` below
/// `prune_ratio` of its largest bar are pinned to the diagonal (and still
/// pulled toward it); the rest are matched optimally against `target`.
TopologicalFit topological_fit(const ScalarField& field, const PersistenceDiagram& current,
                               const PersistenceDiagram& target, double prune_ratio,
                               const WassersteinOptions& options = {});

/// A matched diagram point frozen onto its realizing vertices. Evaluating
/// the matched cost from field values at these vertices gives W_2^2 under a
/// fixed vertex order and matching, which is what the gradient assumes.
/// Target points left on the diagonal appear with birth_vertex = kNoVertex
/// and contribute their constant diagonal distance.
struct AnchoredPoint {
  PairType kind = PairType::MinSaddle;
  VertexId birth_vertex = kNoVertex;
  VertexId death_vertex = kNoVertex;
  bool to_diagonal = false;
  PlanePoint goal;  // target plane point; unused when to_diagonal
};

std::vector<AnchoredPoint> anchor_matching(const PersistenceDiagram& current,
                                           const PersistenceDiagram& target,
                                           const DiagramMatching& matching,
                                           const WassersteinOptions& options = {});

/// W_2 of the anchored matching evaluated on `field`. When `vertex_gradient`
/// is given (size n_v), d W_2 / d values scaled by `weight` is added to it.
double anchored_w2(const ScalarField& field, const std::vector<AnchoredPoint>& anchors,
                   const WassersteinOptions& options = {},
                   std::vector<double>* vertex_gradient = nullptr, double weight = 1.0);

}  // namespace topointerp
