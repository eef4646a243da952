#include "topointerp/wasserstein.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <tuple>

#include <spdlog/spdlog.h>

#include "topointerp/assignment.hpp"
#include "topointerp/error.hpp"

namespace topointerp {

namespace {

constexpr std::array<PairType, 4> kClasses{PairType::MinSaddle, PairType::SaddleMax,
                                           PairType::InfMin, PairType::InfMax};

// Beyond this size the lexicographic tie-break costs more than the solve.
constexpr std::size_t kLexicographicLimit = 256;

double plane_distance(const PlanePoint& a, const PlanePoint& b) {
  return std::hypot(a.birth - b.birth, a.death - b.death);
}

double power(double x, double q) { return q == 2.0 ? x * x : std::pow(x, q); }

struct ClassMatch {
  std::vector<MatchedPair> assignments;
  double cost_sum = 0.0;
};

ClassMatch match_augmented(const std::vector<std::size_t>& ia, const std::vector<PlanePoint>& pa,
                           const std::vector<std::size_t>& ib, const std::vector<PlanePoint>& pb,
                           double q) {
  ClassMatch out;
  const std::size_t na = ia.size();
  const std::size_t nb = ib.size();
  if (na == 0 && nb == 0) return out;
  const std::size_t m = na + nb;
  // Rows: source points then one diagonal slot per target point.
  // Columns: target points then one diagonal slot per source point.
  CostMatrix cost(m, 0.0);
  double finite_total = 0.0;
  std::vector<double> da(na), db(nb);
  for (std::size_t i = 0; i < na; ++i) {
    da[i] = power(diagonal_distance(pa[i]), q);
    finite_total += da[i];
  }
  for (std::size_t j = 0; j < nb; ++j) {
    db[j] = power(diagonal_distance(pb[j]), q);
    finite_total += db[j];
  }
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      cost(i, j) = power(plane_distance(pa[i], pb[j]), q);
      finite_total += cost(i, j);
    }
  }
  // Any assignment using a forbidden entry is worse than sending every
  // point to its own diagonal slot.
  const double forbidden = 1.0 + 2.0 * finite_total;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t k = 0; k < na; ++k) cost(i, nb + k) = k == i ? da[i] : forbidden;
  }
  for (std::size_t r = 0; r < nb; ++r) {
    for (std::size_t j = 0; j < nb; ++j) cost(na + r, j) = r == j ? db[j] : forbidden;
  }
  const auto perm = assignment_solve(cost, m <= kLexicographicLimit ? TieBreak::Lexicographic
                                                                    : TieBreak::None);
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t c = perm[i];
    if (c < nb) {
      const double d = plane_distance(pa[i], pb[c]);
      out.assignments.push_back({ia[i], ib[c], d});
      out.cost_sum += power(d, q);
    } else {
      const double d = diagonal_distance(pa[i]);
      out.assignments.push_back({ia[i], kDiagonal, d});
      out.cost_sum += power(d, q);
    }
  }
  for (std::size_t r = 0; r < nb; ++r) {
    const std::size_t c = perm[na + r];
    if (c < nb) {
      const double d = diagonal_distance(pb[c]);
      out.assignments.push_back({kDiagonal, ib[c], d});
      out.cost_sum += power(d, q);
    }
  }
  return out;
}

ClassMatch match_strict(const std::vector<std::size_t>& ia, const std::vector<PlanePoint>& pa,
                        const std::vector<std::size_t>& ib, const std::vector<PlanePoint>& pb,
                        double q, PairType kind) {
  if (ia.size() != ib.size()) {
    throw Error(ErrorCode::ClassMismatch,
                std::string(to_string(kind)) + " class sizes differ and cropping is disabled");
  }
  ClassMatch out;
  const std::size_t n = ia.size();
  if (n == 0) return out;
  // The extremum value sits in the death slot for InfMax plane points.
  auto value = [kind](const PlanePoint& p) { return kind == PairType::InfMax ? p.death : p.birth; };
  CostMatrix cost(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = power(std::abs(value(pa[i]) - value(pb[j])), q);
  }
  const auto perm = assignment_solve(cost);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(value(pa[i]) - value(pb[perm[i]]));
    out.assignments.push_back({ia[i], ib[perm[i]], d});
    out.cost_sum += power(d, q);
  }
  return out;
}

}  // namespace

PlanePoint plane_point(const PersistencePair& pair, const WassersteinOptions& options) {
  switch (pair.kind) {
    case PairType::InfMin: return {pair.birth, options.crop_high};
    case PairType::InfMax: return {options.crop_low, pair.birth};
    default: return {pair.birth, pair.death};
  }
}

std::pair<double, double> diagonal_projection(double birth, double death) {
  const double m = 0.5 * (birth + death);
  return {m, m};
}

double diagonal_distance(const PlanePoint& p) {
  const auto [mb, md] = diagonal_projection(p.birth, p.death);
  return std::hypot(p.birth - mb, p.death - md);
}

DiagramMatching match_diagrams(const PersistenceDiagram& source, const PersistenceDiagram& target,
                               const WassersteinOptions& options,
                               const std::vector<bool>& source_active) {
  if (!(options.q >= 1.0)) throw Error(ErrorCode::InvalidArgument, "Wasserstein q must be >= 1");
  if (!source_active.empty() && source_active.size() != source.pairs.size()) {
    throw Error(ErrorCode::ShapeMismatch, "activity mask does not match source diagram");
  }
  DiagramMatching result;
  result.q = options.q;
  for (const PairType kind : kClasses) {
    std::vector<std::size_t> ia, ib;
    std::vector<PlanePoint> pa, pb;
    for (std::size_t i = 0; i < source.pairs.size(); ++i) {
      const auto& p = source.pairs[i];
      if (p.kind != kind) continue;
      if (!source_active.empty() && !source_active[i]) {
        const double d = diagonal_distance(plane_point(p, options));
        result.assignments.push_back({i, kDiagonal, d});
        result.cost_sum += power(d, options.q);
        continue;
      }
      ia.push_back(i);
      pa.push_back(plane_point(p, options));
    }
    for (std::size_t j = 0; j < target.pairs.size(); ++j) {
      const auto& p = target.pairs[j];
      if (p.kind != kind) continue;
      ib.push_back(j);
      pb.push_back(plane_point(p, options));
    }
    const bool strict = is_infinite(kind) && !options.crop_infinite;
    auto cm = strict ? match_strict(ia, pa, ib, pb, options.q, kind)
                     : match_augmented(ia, pa, ib, pb, options.q);
    result.cost_sum += cm.cost_sum;
    result.assignments.insert(result.assignments.end(), cm.assignments.begin(),
                              cm.assignments.end());
  }
  std::sort(result.assignments.begin(), result.assignments.end(),
            [](const MatchedPair& x, const MatchedPair& y) {
              return std::tie(x.source, x.target) < std::tie(y.source, y.target);
            });
  result.distance = std::pow(result.cost_sum, 1.0 / options.q);
  return result;
}

std::pair<double, DiagramMatching> wasserstein_distance(const PersistenceDiagram& a,
                                                        const PersistenceDiagram& b,
                                                        const WassersteinOptions& options) {
  auto m = match_diagrams(a, b, options);
  const double d = m.distance;
  return {d, std::move(m)};
}

double normalized_wasserstein(const PersistenceDiagram& a, const PersistenceDiagram& b,
                              const WassersteinOptions& options) {
  if (a.empty() && b.empty()) {
    spdlog::warn("normalized Wasserstein of two empty diagrams is undefined; returning 0");
    return 0.0;
  }
  const PersistenceDiagram empty;
  const double w = wasserstein_distance(a, b, options).first;
  const double wa = wasserstein_distance(a, empty, options).first;
  const double wb = wasserstein_distance(empty, b, options).first;
  const double denom = std::pow(std::pow(wa, options.q) + std::pow(wb, options.q), 1.0 / options.q);
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(w / denom, 0.0, 1.0);
}

}  // namespace topointerp
