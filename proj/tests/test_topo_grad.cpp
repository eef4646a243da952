#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "topointerp/error.hpp"
#include "topointerp/topo_grad.hpp"

using namespace topointerp;

namespace {

const ScalarField kRow(GridShape(5, 1), {0.0, 1.0, 0.2, 0.8, 0.4});

// One finite point (0.2, 0.8) at vertices 2 -> 3 of kRow.
PersistenceDiagram row_point() {
  PersistenceDiagram d;
  d.pairs = {{PairType::MinSaddle, 0.2, 0.8, 2, 3}};
  return d;
}

DiagramMatching single(std::size_t target) {
  DiagramMatching m;
  m.assignments = {{0, target, 0.0}};
  return m;
}

// Matched cost sum recomputed from field values with the matching held fixed.
double squared_cost(const ScalarField& f, const PersistenceDiagram& current, const PersistenceDiagram& target,
                    const DiagramMatching& m) {
  double s = 0;
  for (const auto& a : m.assignments) {
    if (a.source == kDiagonal) {
      const auto& t = target.pairs[a.target];
      const auto p = plane_point(t);
      s += std::pow(p.death - p.birth, 2) / 2;
      continue;
    }
    const auto& p = current.pairs[a.source];
    double b = f[p.birth_vertex], d = 0;
    switch (p.kind) {
      case PairType::InfMin: d = 1.0; break;
      case PairType::InfMax: d = b; b = 0.0; break;
      default: d = f[p.death_vertex];
    }
    if (a.target == kDiagonal) {
      s += (d - b) * (d - b) / 2;
    } else {
      const auto t = plane_point(target.pairs[a.target]);
      s += (b - t.birth) * (b - t.birth) + (d - t.death) * (d - t.death);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("build_maps on the row") {
  const auto d = compute_diagram(kRow);
  const auto maps = build_maps(kRow, d);
  REQUIRE(!maps.backward.empty());
  CHECK(maps.backward[0].birth == 2);
  CHECK(maps.backward[0].death == 3);
  CHECK(maps.order == vertex_order(kRow));
  for (std::size_t pos = 0; pos < maps.points.size(); ++pos) {
    const auto& p = d.pairs[maps.points[pos]];
    CHECK(kRow[maps.backward[pos].birth] == p.birth);
    if (p.infinite()) {
      CHECK(maps.backward[pos].death == kNoVertex);
    } else {
      CHECK(kRow[maps.backward[pos].death] == p.death);
    }
  }
}

TEST_CASE("build_maps ordering and validation") {
  const ScalarField f(GridShape(4, 1), {0.1, 0.5, 0.1, 0.3});
  PersistenceDiagram d;
  d.pairs = {{PairType::MinSaddle, 0.1, 0.5, 0, 1}, {PairType::MinSaddle, 0.1, 0.3, 2, 3}};
  const auto maps = build_maps(f, d);
  CHECK(maps.points == std::vector<std::size_t>{1, 0});

  PersistenceDiagram inf_only;
  inf_only.pairs = {{PairType::InfMin, 0.1, kInfinity, 0, kNoVertex}};
  const auto m2 = build_maps(f, inf_only);
  REQUIRE(m2.backward.size() == 1);
  CHECK(m2.backward[0].death == kNoVertex);

  PersistenceDiagram bad;
  bad.pairs = {{PairType::MinSaddle, 0.1, 0.4, 0, 1}};
  try {
    (void)build_maps(f, bad);
    FAIL("expected InconsistentDiagram");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InconsistentDiagram);
  }
}

TEST_CASE("wasserstein_gradient formula cases") {
  const auto cur = row_point();
  const auto maps = build_maps(kRow, cur);
  CHECK(wasserstein_gradient(cur, cur, single(0), maps).empty());

  const auto to_diag = wasserstein_gradient(cur, PersistenceDiagram{}, single(kDiagonal), maps);
  CHECK(to_diag.at(2) == doctest::Approx(-0.6));
  CHECK(to_diag.at(3) == doctest::Approx(0.6));

  PersistenceDiagram target;
  target.pairs = {{PairType::MinSaddle, 0.1, 0.9, 0, 1}};
  const auto stretch = wasserstein_gradient(cur, target, single(0), maps);
  CHECK(stretch.at(2) == doctest::Approx(0.2));
  CHECK(stretch.at(3) == doctest::Approx(-0.2));
}

TEST_CASE("loss_value_w2 examples") {
  const auto cur = row_point();
  CHECK(loss_value_w2(cur, cur, wasserstein_distance(cur, cur).second) == 0.0);
  PersistenceDiagram a, b;
  a.pairs = {{PairType::SaddleMax, 0, 1, 0, 1}, {PairType::SaddleMax, 0, 0.2, 2, 3}};
  b.pairs = {{PairType::SaddleMax, 0.1, 1, 0, 1}};
  CHECK(loss_value_w2(a, b, wasserstein_distance(a, b).second) == doctest::Approx(0.17320508).epsilon(1e-8));
  CHECK(loss_value_w2({}, {}, wasserstein_distance({}, {}).second) == 0.0);
}

TEST_CASE("gradient matches finite differences with the matching frozen") {
  std::mt19937_64 rng(41);
  const double h = 1e-4;
  for (int trial = 0; trial < 10; ++trial) {
    auto f = oracle::random_field(GridShape(8, 8), rng);
    const auto cur = compute_diagram(f);
    const auto target = prune(compute_diagram(oracle::random_field(GridShape(8, 8), rng)), 0.2);
    const auto m = wasserstein_distance(cur, target).second;
    const auto maps = build_maps(f, cur);
    const auto grad = wasserstein_gradient(cur, target, m, maps);
    const auto cps = critical_points(cur);
    std::set<VertexId> critical;
    for (const auto& [v, val] : cps) critical.insert(v);
    for (const auto& [v, g] : grad) CHECK(critical.count(v) == 1);
    for (VertexId v : critical) {
      auto up = f, down = f;
      up[v] += h;
      down[v] -= h;
      const double fd = (squared_cost(up, cur, target, m) - squared_cost(down, cur, target, m)) / (2 * h);
      const double an = grad.count(v) ? grad.at(v) : 0.0;
      CHECK(std::abs(fd - an) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
    CHECK(squared_cost(f, cur, target, m) == doctest::Approx(m.cost_sum).epsilon(1e-12));
  }
}

TEST_CASE("a small descent step lowers the frozen-matching cost") {
  std::mt19937_64 rng(43);
  auto f = oracle::random_field(GridShape(8, 8), rng);
  const auto cur = compute_diagram(f);
  PersistenceDiagram target;
  target.pairs = {{PairType::SaddleMax, 0.2, 0.9, 0, 1}, {PairType::InfMax, 0.95, kInfinity, 2, kNoVertex}};
  const auto m = wasserstein_distance(cur, target).second;
  const auto grad = wasserstein_gradient(cur, target, m, build_maps(f, cur));
  const double before = squared_cost(f, cur, target, m);
  for (const auto& [v, g] : grad) f[v] -= 1e-3 * g;
  CHECK(squared_cost(f, cur, target, m) < before);
}

TEST_CASE("topological_fit scales by the rooted distance and pins pruned bars") {
  std::mt19937_64 rng(47);
  const auto f = oracle::random_field(GridShape(8, 8), rng);
  const auto cur = compute_diagram(f);
  const auto target = prune(compute_diagram(oracle::random_field(GridShape(8, 8), rng)), 0.1);
  const auto fit = topological_fit(f, cur, target, 0.1);
  const auto mask = prune_mask(cur, 0.1);
  std::size_t pruned = 0;
  for (bool k : mask) pruned += k ? 0 : 1;
  CHECK(fit.pruned_pairs == pruned);
  for (const auto& a : fit.matching.assignments) {
    if (a.source != kDiagonal && !mask[a.source]) CHECK(a.target == kDiagonal);
  }
  const auto squared = wasserstein_gradient(cur, target, fit.matching, build_maps(f, cur));
  for (const auto& [v, g] : fit.gradient) CHECK(g == doctest::Approx(squared.at(v) / (2 * fit.w2)));

  // anchored evaluation reproduces the same value and gradient
  const auto anchors = anchor_matching(cur, target, fit.matching);
  std::vector<double> vg(f.size(), 0.0);
  CHECK(anchored_w2(f, anchors, {}, &vg) == doctest::Approx(fit.w2).epsilon(1e-12));
  for (const auto& [v, g] : fit.gradient) CHECK(vg[static_cast<std::size_t>(v)] == doctest::Approx(g));
}
