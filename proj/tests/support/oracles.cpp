#include "oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace oracle {

using topointerp::kInfinity;
using topointerp::kNoVertex;
using topointerp::PairType;
using topointerp::PersistencePair;

std::set<std::pair<VertexId, VertexId>> freudenthal_edges(const GridShape& shape) {
  std::set<std::pair<VertexId, VertexId>> edges;
  auto add_simplex = [&](const std::vector<std::array<int, 3>>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const auto a = shape.index(pts[i][0], pts[i][1], pts[i][2]);
        const auto b = shape.index(pts[j][0], pts[j][1], pts[j][2]);
        edges.insert({std::min(a, b), std::max(a, b)});
      }
    }
  };
  const auto [cx, cy, cz] = shape.extents;
  if (shape.dims == 2) {
    for (int y = 0; y + 1 < cy; ++y) {
      for (int x = 0; x + 1 < cx; ++x) {
        add_simplex({{x, y, 0}, {x + 1, y, 0}, {x + 1, y + 1, 0}});
        add_simplex({{x, y, 0}, {x, y + 1, 0}, {x + 1, y + 1, 0}});
      }
    }
    // Degenerate grids (an extent of 1) only have the axis edges.
    if (cx == 1 || cy == 1) {
      for (int y = 0; y < cy; ++y) {
        for (int x = 0; x < cx; ++x) {
          if (x + 1 < cx) add_simplex({{x, y, 0}, {x + 1, y, 0}});
          if (y + 1 < cy) add_simplex({{x, y, 0}, {x, y + 1, 0}});
        }
      }
    }
    return edges;
  }
  std::array<int, 3> perm{0, 1, 2};
  std::vector<std::array<int, 3>> orders;
  do {
    orders.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (int z = 0; z + 1 < cz; ++z) {
    for (int y = 0; y + 1 < cy; ++y) {
      for (int x = 0; x + 1 < cx; ++x) {
        for (const auto& o : orders) {
          std::vector<std::array<int, 3>> tet{{x, y, z}};
          auto p = tet.back();
          for (int axis : o) {
            p[axis] += 1;
            tet.push_back(p);
          }
          add_simplex(tet);
        }
      }
    }
  }
  return edges;
}

namespace {

bool before(const ScalarField& f, VertexId a, VertexId b) {
  return f[a] < f[b] || (f[a] == f[b] && a < b);
}

// One sweep; `up` selects the sublevel (ascending) direction.
void sweep(const ScalarField& f, const std::vector<std::vector<VertexId>>& adj, bool up,
           PersistenceDiagram& out) {
  const auto n = static_cast<VertexId>(f.size());
  std::vector<VertexId> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](VertexId a, VertexId b) {
    return up ? before(f, a, b) : before(f, b, a);
  });
  // label[v] = birth vertex of v's component, or -1 if not inserted yet.
  std::vector<VertexId> label(static_cast<std::size_t>(n), -1);
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (VertexId i = 0; i < n; ++i) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = static_cast<int>(i);
  for (VertexId v : order) {
    std::set<VertexId> births;
    for (VertexId u : adj[static_cast<std::size_t>(v)]) {
      if (label[static_cast<std::size_t>(u)] >= 0) births.insert(label[static_cast<std::size_t>(u)]);
    }
    if (births.empty()) {
      label[static_cast<std::size_t>(v)] = v;
      continue;
    }
    VertexId eldest = *births.begin();
    for (VertexId b : births) {
      if (rank[static_cast<std::size_t>(b)] < rank[static_cast<std::size_t>(eldest)]) eldest = b;
    }
    for (VertexId b : births) {
      if (b == eldest) continue;
      PersistencePair p;
      if (up) {
        p = {PairType::MinSaddle, f[b], f[v], b, v};
      } else {
        p = {PairType::SaddleMax, f[v], f[b], v, b};
      }
      out.pairs.push_back(p);
    }
    label[static_cast<std::size_t>(v)] = eldest;
    for (auto& l : label) {
      if (l >= 0 && births.count(l) != 0) l = eldest;
    }
  }
  const VertexId root = order.front();
  out.pairs.push_back({up ? PairType::InfMin : PairType::InfMax, f[root], kInfinity, root, kNoVertex});
}

}  // namespace

PersistenceDiagram reference_diagram(const ScalarField& field) {
  const auto edges = freudenthal_edges(field.shape);
  std::vector<std::vector<VertexId>> adj(field.size());
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  PersistenceDiagram d;
  if (field.size() == 0) return d;
  sweep(field, adj, true, d);
  sweep(field, adj, false, d);
  topointerp::sort_diagram_order(d);
  return d;
}

double brute_force_assignment(const topointerp::CostMatrix& cost) {
  std::vector<std::size_t> p(cost.size());
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += cost(i, p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

std::vector<std::size_t> brute_force_permutation(const topointerp::CostMatrix& cost, double tol) {
  const double best = brute_force_assignment(cost);
  std::vector<std::size_t> p(cost.size());
  std::iota(p.begin(), p.end(), 0);
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += cost(i, p[i]);
    if (s <= best + tol) return p;  // next_permutation walks in lexicographic order
  } while (std::next_permutation(p.begin(), p.end()));
  return {};
}

namespace {

struct Pt {
  double b, d;
};

std::vector<Pt> class_points(const PersistenceDiagram& dg, PairType kind) {
  std::vector<Pt> out;
  for (const auto& p : dg.pairs) {
    if (p.kind != kind) continue;
    if (kind == PairType::InfMin) {
      out.push_back({p.birth, 1.0});
    } else if (kind == PairType::InfMax) {
      out.push_back({0.0, p.birth});
    } else {
      out.push_back({p.birth, p.death});
    }
  }
  return out;
}

double to_diag(const Pt& p) { return std::abs(p.d - p.b) / std::sqrt(2.0); }

double dist(const Pt& a, const Pt& b) { return std::hypot(a.b - b.b, a.d - b.d); }

// Minimum over partial injections a -> b (unmatched points go to the
// diagonal) of sum cost^q.
double best_partial(const std::vector<Pt>& a, const std::vector<Pt>& b, double q) {
  std::vector<bool> used(b.size(), false);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
    if (acc >= best) return;
    if (i == a.size()) {
      double s = acc;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (!used[j]) s += std::pow(to_diag(b[j]), q);
      }
      best = std::min(best, s);
      return;
    }
    rec(i + 1, acc + std::pow(to_diag(a[i]), q));
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      used[j] = true;
      rec(i + 1, acc + std::pow(dist(a[i], b[j]), q));
      used[j] = false;
    }
  };
  rec(0, 0.0);
  return best;
}

}  // namespace

double brute_force_wasserstein(const PersistenceDiagram& a, const PersistenceDiagram& b, double q) {
  double total = 0.0;
  for (auto kind : {PairType::MinSaddle, PairType::SaddleMax, PairType::InfMin, PairType::InfMax}) {
    total += best_partial(class_points(a, kind), class_points(b, kind), q);
  }
  return std::pow(total, 1.0 / q);
}

topointerp::nn::Volume naive_conv(const topointerp::nn::Volume& in, const std::vector<double>& weight,
                                  const std::vector<double>& bias, int out_channels, int dims) {
  topointerp::nn::Volume out;
  out.reshape(out_channels, in.extent);
  const auto [W, H, D] = in.extent;
  const int K = dims == 3 ? 27 : 9;
  for (int o = 0; o < out_channels; ++o) {
    for (int z = 0; z < D; ++z) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double s = bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < in.channels; ++c) {
            for (int k = 0; k < K; ++k) {
              const int dx = k % 3 - 1;
              const int dy = (k / 3) % 3 - 1;
              const int dz = dims == 3 ? k / 9 - 1 : 0;
              const int sx = x + dx, sy = y + dy, sz = z + dz;
              if (sx < 0 || sy < 0 || sz < 0 || sx >= W || sy >= H || sz >= D) continue;
              const double v = in.data[((static_cast<std::size_t>(c) * D + sz) * H + sy) * W + sx];
              s += weight[(static_cast<std::size_t>(o) * in.channels + c) * K + k] * v;
            }
          }
          out.data[((static_cast<std::size_t>(o) * D + z) * H + y) * W + x] = s;
        }
      }
    }
  }
  return out;
}

topointerp::nn::Volume naive_upsample(const topointerp::nn::Volume& in, int dims) {
  const auto [W, H, D] = in.extent;
  const std::array<int, 3> oe{2 * W, 2 * H, dims == 3 ? 2 * D : D};
  topointerp::nn::Volume out;
  out.reshape(in.channels, oe);
  auto src = [](int o, int n, int& i0, int& i1, double& t) {
    double s = (o + 0.5) / 2.0 - 0.5;
    if (s < 0) s = 0;
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, n - 1);
    t = s - i0;
  };
  for (int c = 0; c < in.channels; ++c) {
    for (int z = 0; z < oe[2]; ++z) {
      int z0 = z, z1 = z;
      double tz = 0.0;
      if (dims == 3) src(z, D, z0, z1, tz);
      for (int y = 0; y < oe[1]; ++y) {
        int y0, y1;
        double ty;
        src(y, H, y0, y1, ty);
        for (int x = 0; x < oe[0]; ++x) {
          int x0, x1;
          double tx;
          src(x, W, x0, x1, tx);
          auto at = [&](int xx, int yy, int zz) {
            return in.data[((static_cast<std::size_t>(c) * D + zz) * H + yy) * W + xx];
          };
          auto plane = [&](int zz) {
            return (1 - ty) * ((1 - tx) * at(x0, y0, zz) + tx * at(x1, y0, zz)) +
                   ty * ((1 - tx) * at(x0, y1, zz) + tx * at(x1, y1, zz));
          };
          const double v = (1 - tz) * plane(z0) + tz * plane(z1);
          out.data[((static_cast<std::size_t>(c) * oe[2] + z) * oe[1] + y) * oe[0] + x] = v;
        }
      }
    }
  }
  return out;
}

ScalarField random_field(const GridShape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScalarField f(shape);
  for (auto& v : f.values) v = u(rng);
  return f;
}

PersistenceDiagram random_diagram(std::mt19937_64& rng, int per_class) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, per_class);
  PersistenceDiagram d;
  VertexId next = 0;
  for (auto kind : {PairType::MinSaddle, PairType::SaddleMax}) {
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      d.pairs.push_back({kind, a, b, next, next + 1});
      next += 2;
    }
  }
  for (auto kind : {PairType::InfMin, PairType::InfMax}) {
    if (u(rng) < 0.8) d.pairs.push_back({kind, u(rng), kInfinity, next++, kNoVertex});
  }
  return d;
}

}  // namespace oracle
