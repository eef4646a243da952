#include "topointerp/topo_grad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "topointerp/error.hpp"

namespace topointerp {

FiltrationMaps build_maps(const ScalarField& field, const PersistenceDiagram& diagram) {
  constexpr double tol = 1e-12;
  FiltrationMaps maps;
  maps.order = vertex_order(field);
  maps.points.resize(diagram.pairs.size());
  std::iota(maps.points.begin(), maps.points.end(), std::size_t{0});
  std::stable_sort(maps.points.begin(), maps.points.end(), [&](std::size_t a, std::size_t b) {
    return diagram_order_less(diagram.pairs[a], diagram.pairs[b]);
  });
  maps.backward.reserve(diagram.pairs.size());
  maps.position_of_pair.assign(diagram.pairs.size(), 0);
  const auto n = static_cast<VertexId>(field.size());
  auto check = [&](VertexId v, double value, const char* what) {
    if (v < 0 || v >= n) {
      throw Error(ErrorCode::InconsistentDiagram, std::string(what) + " vertex out of range");
    }
    if (std::abs(field[v] - value) > tol) {
      throw Error(ErrorCode::InconsistentDiagram,
                  std::string(what) + " value disagrees with field at vertex " + std::to_string(v));
    }
  };
  for (std::size_t pos = 0; pos < maps.points.size(); ++pos) {
    const auto& p = diagram.pairs[maps.points[pos]];
    check(p.birth_vertex, p.birth, "birth");
    FiltrationMaps::PointVertices pv{p.birth_vertex, kNoVertex};
    if (!p.infinite()) {
      check(p.death_vertex, p.death, "death");
      pv.death = p.death_vertex;
    }
    maps.backward.push_back(pv);
    maps.position_of_pair[maps.points[pos]] = pos;
  }
  return maps;
}

VertexGradient wasserstein_gradient(const PersistenceDiagram& current,
                                    const PersistenceDiagram& target,
                                    const DiagramMatching& matching, const FiltrationMaps& maps,
                                    const WassersteinOptions& options) {
  VertexGradient grad;
  auto add = [&](VertexId v, double g) {
    if (v == kNoVertex || g == 0.0) return;
    grad[v] += g;
  };
  for (const auto& m : matching.assignments) {
    if (m.source == kDiagonal) continue;
    const auto& pair = current.pairs[m.source];
    const PlanePoint p = plane_point(pair, options);
    PlanePoint goal;
    if (m.target == kDiagonal) {
      const auto [mb, md] = diagonal_projection(p.birth, p.death);
      goal = {mb, md};
    } else {
      goal = plane_point(target.pairs[m.target], options);
    }
    const double gb = 2.0 * (p.birth - goal.birth);
    const double gd = 2.0 * (p.death - goal.death);
    const auto& vertices = maps.backward[maps.position_of_pair[m.source]];
    switch (pair.kind) {
      case PairType::InfMin: add(vertices.birth, gb); break;
      case PairType::InfMax: add(vertices.birth, gd); break;
      default:
        add(vertices.birth, gb);
        add(vertices.death, gd);
        break;
    }
  }
  return grad;
}

double loss_value_w2(const PersistenceDiagram&, const PersistenceDiagram&,
                     const DiagramMatching& matching) {
  double sum = 0.0;
  for (const auto& m : matching.assignments) sum += m.cost * m.cost;
  return std::sqrt(sum);
}

TopologicalFit topological_fit(const ScalarField& field, const PersistenceDiagram& current,
                               const PersistenceDiagram& target, double prune_ratio,
                               const WassersteinOptions& options) {
  WassersteinOptions w2 = options;
  w2.q = 2.0;
  TopologicalFit fit;
  const auto active = prune_mask(current, prune_ratio);
  for (bool a : active) fit.pruned_pairs += a ? 0 : 1;
  fit.matching = match_diagrams(current, target, w2, active);
  fit.w2 = loss_value_w2(current, target, fit.matching);
  if (fit.w2 > 0.0) {
    const auto maps = build_maps(field, current);
    fit.gradient = wasserstein_gradient(current, target, fit.matching, maps, w2);
    const double scale = 1.0 / (2.0 * fit.w2);
    for (auto& [v, g] : fit.gradient) g *= scale;
  }
  return fit;
}

}  // namespace topointerp

namespace topointerp {

std::vector<AnchoredPoint> anchor_matching(const PersistenceDiagram& current,
                                           const PersistenceDiagram& target,
                                           const DiagramMatching& matching,
                                           const WassersteinOptions& options) {
  std::vector<AnchoredPoint> anchors;
  anchors.reserve(matching.assignments.size());
  for (const auto& m : matching.assignments) {
    if (m.source == kDiagonal) {
      AnchoredPoint a;
      a.kind = target.pairs[m.target].kind;
      a.goal = plane_point(target.pairs[m.target], options);
      anchors.push_back(a);
      continue;
    }
    const auto& p = current.pairs[m.source];
    AnchoredPoint a;
    a.kind = p.kind;
    a.birth_vertex = p.birth_vertex;
    a.death_vertex = p.infinite() ? kNoVertex : p.death_vertex;
    a.to_diagonal = m.target == kDiagonal;
    if (!a.to_diagonal) a.goal = plane_point(target.pairs[m.target], options);
    anchors.push_back(a);
  }
  return anchors;
}

namespace {

struct AnchoredTerm {
  double birth = 0.0;
  double death = 0.0;
};

AnchoredTerm anchored_coords(const ScalarField& field, const AnchoredPoint& a,
                             const WassersteinOptions& options) {
  switch (a.kind) {
    case PairType::InfMin: return {field[a.birth_vertex], options.crop_high};
    case PairType::InfMax: return {options.crop_low, field[a.birth_vertex]};
    default: return {field[a.birth_vertex], field[a.death_vertex]};
  }
}

}  // namespace

double anchored_w2(const ScalarField& field, const std::vector<AnchoredPoint>& anchors,
                   const WassersteinOptions& options, std::vector<double>* vertex_gradient,
                   double weight) {
  double sum = 0.0;
  std::vector<std::pair<VertexId, double>> partials;
  partials.reserve(2 * anchors.size());
  for (const auto& a : anchors) {
    if (a.birth_vertex == kNoVertex) {
      const double d = diagonal_distance(a.goal);
      sum += d * d;
      continue;
    }
    const auto c = anchored_coords(field, a, options);
    PlanePoint goal = a.goal;
    if (a.to_diagonal) {
      const auto [mb, md] = diagonal_projection(c.birth, c.death);
      goal = {mb, md};
    }
    const double db = c.birth - goal.birth;
    const double dd = c.death - goal.death;
    sum += db * db + dd * dd;
    switch (a.kind) {
      case PairType::InfMin: partials.emplace_back(a.birth_vertex, 2.0 * db); break;
      case PairType::InfMax: partials.emplace_back(a.birth_vertex, 2.0 * dd); break;
      default:
        partials.emplace_back(a.birth_vertex, 2.0 * db);
        partials.emplace_back(a.death_vertex, 2.0 * dd);
        break;
    }
  }
  const double w2 = std::sqrt(sum);
  if (vertex_gradient != nullptr && w2 > 0.0) {
    const double scale = weight / (2.0 * w2);
    for (const auto& [v, g] : partials) (*vertex_gradient)[static_cast<std::size_t>(v)] += scale * g;
  }
  return w2;
}

}  // namespace topointerp
