#include "topointerp/persistence.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_set>

#include "topointerp/error.hpp"

namespace topointerp {

namespace {

std::atomic<std::uint64_t> g_diagram_computations{0};

struct UnionFind {
  std::vector<VertexId> parent;

  explicit UnionFind(std::size_t n) : parent(n, kNoVertex) {}

  VertexId find(VertexId v) {
    VertexId root = v;
    while (parent[static_cast<std::size_t>(root)] != root) {
      root = parent[static_cast<std::size_t>(root)];
    }
    while (parent[static_cast<std::size_t>(v)] != root) {
      const VertexId next = parent[static_cast<std::size_t>(v)];
      parent[static_cast<std::size_t>(v)] = root;
      v = next;
    }
    return root;
  }
};

// A component's root is always its birth vertex (the oldest vertex), so the
// elder rule is just "the root with the smallest sweep rank survives".
// Returns (dying birth vertex, merge vertex) events plus the surviving root.
struct SweepResult {
  std::vector<std::pair<VertexId, VertexId>> deaths;
  VertexId survivor = kNoVertex;
};

SweepResult sweep(const GridShape& shape, std::span<const VertexId> order) {
  const auto n = order.size();
  const auto rank = order_ranks(order);
  UnionFind uf(n);
  SweepResult result;
  std::vector<VertexId> nbrs;
  std::vector<VertexId> roots;
  nbrs.reserve(14);
  roots.reserve(14);
  for (const VertexId v : order) {
    neighbors_into(shape, v, nbrs);
    roots.clear();
    for (const VertexId u : nbrs) {
      if (rank[static_cast<std::size_t>(u)] > rank[static_cast<std::size_t>(v)]) continue;
      const VertexId r = uf.find(u);
      if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
    }
    if (roots.empty()) {
      uf.parent[static_cast<std::size_t>(v)] = v;
      continue;
    }
    const auto oldest = *std::min_element(roots.begin(), roots.end(), [&](VertexId a, VertexId b) {
      return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)];
    });
    // Younger components die in birth order so the output is deterministic.
    std::sort(roots.begin(), roots.end(), [&](VertexId a, VertexId b) {
      return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)];
    });
    for (const VertexId r : roots) {
      if (r == oldest) continue;
      result.deaths.emplace_back(r, v);
      uf.parent[static_cast<std::size_t>(r)] = oldest;
    }
    uf.parent[static_cast<std::size_t>(v)] = oldest;
  }
  if (n > 0) result.survivor = order.front();
  return result;
}

PersistencePair make_sublevel_pair(const ScalarField& f, VertexId born, VertexId merge) {
  return {PairType::MinSaddle, f[born], f[merge], born, merge};
}

PersistencePair make_superlevel_pair(const ScalarField& f, VertexId born, VertexId merge) {
  return {PairType::SaddleMax, f[merge], f[born], merge, born};
}

PersistenceDiagram assemble(const ScalarField& field,
                            const std::vector<std::pair<VertexId, VertexId>>& sub_deaths,
                            const std::vector<std::pair<VertexId, VertexId>>& super_deaths,
                            VertexId global_min, VertexId global_max) {
  PersistenceDiagram d;
  d.pairs.reserve(sub_deaths.size() + super_deaths.size() + 2);
  for (const auto& [born, merge] : sub_deaths) d.pairs.push_back(make_sublevel_pair(field, born, merge));
  for (const auto& [born, merge] : super_deaths) d.pairs.push_back(make_superlevel_pair(field, born, merge));
  if (global_min != kNoVertex) {
    d.pairs.push_back({PairType::InfMin, field[global_min], kInfinity, global_min, kNoVertex});
    d.pairs.push_back({PairType::InfMax, field[global_max], kInfinity, global_max, kNoVertex});
  }
  sort_diagram_order(d);
  return d;
}

}  // namespace

std::string_view to_string(PairType type) {
  switch (type) {
    case PairType::MinSaddle: return "min_saddle";
    case PairType::SaddleMax: return "saddle_max";
    case PairType::InfMin: return "inf_min";
    case PairType::InfMax: return "inf_max";
  }
  return "unknown";
}

std::optional<PairType> parse_pair_type(std::string_view text) {
  if (text == "min_saddle") return PairType::MinSaddle;
  if (text == "saddle_max") return PairType::SaddleMax;
  if (text == "inf_min") return PairType::InfMin;
  if (text == "inf_max") return PairType::InfMax;
  return std::nullopt;
}

std::size_t PersistenceDiagram::count(PairType kind) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.kind == kind; }));
}

bool diagram_order_less(const PersistencePair& a, const PersistencePair& b) {
  if (a.infinite() != b.infinite()) return !a.infinite();
  return std::tie(a.birth, a.death, a.kind, a.birth_vertex, a.death_vertex) <
         std::tie(b.birth, b.death, b.kind, b.birth_vertex, b.death_vertex);
}

void sort_diagram_order(PersistenceDiagram& diagram) {
  std::stable_sort(diagram.pairs.begin(), diagram.pairs.end(), diagram_order_less);
}

PersistenceDiagram compute_diagram(const ScalarField& field) {
  g_diagram_computations.fetch_add(1, std::memory_order_relaxed);
  const auto ascending = vertex_order(field);
  if (ascending.empty()) return {};
  const std::vector<VertexId> descending(ascending.rbegin(), ascending.rend());
  const auto sub = sweep(field.shape, ascending);
  const auto super = sweep(field.shape, descending);
  return assemble(field, sub.deaths, super.deaths, sub.survivor, super.survivor);
}

namespace {

// Labels the connected components of the first `count` vertices of `order`;
// returns, per vertex, the eldest (lowest-rank) vertex of its component, or
// kNoVertex if not yet inserted.
std::vector<VertexId> label_components(const GridShape& shape, std::span<const VertexId> order,
                                       std::span<const VertexId> rank, std::size_t count) {
  const auto n = order.size();
  std::vector<VertexId> eldest(n, kNoVertex);
  std::vector<VertexId> members;
  std::vector<VertexId> nbrs;
  // Seeding BFS from vertices in sweep order makes the seed the eldest.
  for (std::size_t i = 0; i < count; ++i) {
    const VertexId seed = order[i];
    if (eldest[static_cast<std::size_t>(seed)] != kNoVertex) continue;
    std::deque<VertexId> queue{seed};
    eldest[static_cast<std::size_t>(seed)] = seed;
    while (!queue.empty()) {
      const VertexId v = queue.front();
      queue.pop_front();
      neighbors_into(shape, v, nbrs);
      for (const VertexId u : nbrs) {
        if (static_cast<std::size_t>(rank[static_cast<std::size_t>(u)]) >= count) continue;
        if (eldest[static_cast<std::size_t>(u)] != kNoVertex) continue;
        eldest[static_cast<std::size_t>(u)] = seed;
        queue.push_back(u);
      }
    }
  }
  return eldest;
}

std::vector<std::pair<VertexId, VertexId>> brute_force_deaths(const GridShape& shape,
                                                              std::span<const VertexId> order) {
  const auto rank = order_ranks(order);
  std::vector<std::pair<VertexId, VertexId>> deaths;
  std::vector<VertexId> previous_roots;
  for (std::size_t step = 1; step <= order.size(); ++step) {
    const auto eldest = label_components(shape, order, rank, step);
    const VertexId inserted = order[step - 1];
    std::vector<VertexId> dying;
    for (const VertexId root : previous_roots) {
      if (eldest[static_cast<std::size_t>(root)] != root) dying.push_back(root);
    }
    std::sort(dying.begin(), dying.end(), [&](VertexId a, VertexId b) {
      return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)];
    });
    for (const VertexId root : dying) deaths.emplace_back(root, inserted);
    previous_roots.clear();
    for (std::size_t i = 0; i < step; ++i) {
      const VertexId v = order[i];
      if (eldest[static_cast<std::size_t>(v)] == v) previous_roots.push_back(v);
    }
  }
  return deaths;
}

}  // namespace

PersistenceDiagram brute_force_diagram(const ScalarField& field) {
  if (field.shape.vertex_count() > kBruteForceLimit) {
    throw Error(ErrorCode::OracleTooLarge,
                "brute force diagram limited to " + std::to_string(kBruteForceLimit) + " vertices");
  }
  const auto ascending = vertex_order(field);
  if (ascending.empty()) return {};
  const std::vector<VertexId> descending(ascending.rbegin(), ascending.rend());
  const auto sub = brute_force_deaths(field.shape, ascending);
  const auto super = brute_force_deaths(field.shape, descending);
  return assemble(field, sub, super, ascending.front(), descending.front());
}

std::vector<bool> prune_mask(const PersistenceDiagram& diagram, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "prune ratio must lie in [0, 1)");
  }
  double largest = 0.0;
  for (const auto& p : diagram.pairs) {
    if (!p.infinite()) largest = std::max(largest, p.persistence());
  }
  const double threshold = ratio * largest;
  std::vector<bool> keep(diagram.pairs.size(), true);
  for (std::size_t i = 0; i < diagram.pairs.size(); ++i) {
    const auto& p = diagram.pairs[i];
    if (p.infinite()) continue;
    const double pers = p.persistence();
    keep[i] = pers > 0.0 && pers >= threshold;
  }
  return keep;
}

PersistenceDiagram prune(const PersistenceDiagram& diagram, double ratio) {
  const auto keep = prune_mask(diagram, ratio);
  PersistenceDiagram out;
  out.source_time = diagram.source_time;
  for (std::size_t i = 0; i < diagram.pairs.size(); ++i) {
    if (keep[i]) out.pairs.push_back(diagram.pairs[i]);
  }
  return out;
}

std::vector<std::pair<VertexId, double>> critical_points(const PersistenceDiagram& diagram) {
  std::vector<std::pair<VertexId, double>> out;
  std::unordered_set<VertexId> seen;
  auto add = [&](VertexId v, double value) {
    if (v == kNoVertex) return;
    if (seen.insert(v).second) out.emplace_back(v, value);
  };
  for (const auto& p : diagram.pairs) {
    add(p.birth_vertex, p.birth);
    if (!p.infinite()) add(p.death_vertex, p.death);
  }
  return out;
}

std::uint64_t diagram_computation_count() {
  return g_diagram_computations.load(std::memory_order_relaxed);
}

void reset_diagram_computation_count() { g_diagram_computations.store(0); }

}  // namespace topointerp
