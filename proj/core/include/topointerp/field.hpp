#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace topointerp {

using VertexId = std::int64_t;

/// Regular grid of vertices. Index layout is x fastest: i = x + cx * (y + cy * z).
struct GridShape {
  int dims = 2;
  std::array<int, 3> extents{1, 1, 1};

  GridShape() = default;
  GridShape(int width, int height) : dims(2), extents{width, height, 1} {}
  GridShape(int width, int height, int depth) : dims(3), extents{width, height, depth} {}

  [[nodiscard]] std::int64_t vertex_count() const noexcept {
    return std::int64_t{extents[0]} * extents[1] * extents[2];
  }
  [[nodiscard]] VertexId index(int x, int y, int z = 0) const noexcept {
    return x + std::int64_t{extents[0]} * (y + std::int64_t{extents[1]} * z);
  }
  [[nodiscard]] std::array<int, 3> coords(VertexId v) const noexcept {
    const auto cx = extents[0];
    const auto cy = extents[1];
    return {static_cast<int>(v % cx), static_cast<int>((v / cx) % cy),
            static_cast<int>(v / (std::int64_t{cx} * cy))};
  }

  /// Throws InvalidArgument unless dims is 2 or 3 and every extent is >= 1
  /// (z extent must be 1 in 2D).
  void validate() const;

  friend bool operator==(const GridShape&, const GridShape&) = default;
};

struct ScalarField {
  GridShape shape;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(GridShape s, std::vector<double> v);
  explicit ScalarField(GridShape s, double fill = 0.0)
      : shape(s), values(static_cast<std::size_t>(s.vertex_count()), fill) {}

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] bool empty() const noexcept { return values.empty(); }
  double& operator[](VertexId v) { return values[static_cast<std::size_t>(v)]; }
  double operator[](VertexId v) const { return values[static_cast<std::size_t>(v)]; }
};

/// N timesteps on a shared grid. Non-keyframe fields may be empty when the
/// series was loaded from reduced input.
struct ScalarFieldSeries {
  GridShape shape;
  std::vector<ScalarField> fields;
  std::vector<bool> keyframes;
  std::vector<double> times;

  ScalarFieldSeries() = default;
  ScalarFieldSeries(GridShape s, std::size_t count);

  [[nodiscard]] std::size_t count() const noexcept { return fields.size(); }
  [[nodiscard]] std::size_t keyframe_count() const;
  [[nodiscard]] std::vector<std::size_t> keyframe_indices() const;
  [[nodiscard]] bool has_field(std::size_t k) const { return !fields[k].empty(); }
};

/// times[k] = k / (N - 1).
std::vector<double> uniform_times(std::size_t count);

/// Affine rescale to [0, 1]. Throws ConstantField when max == min.
ScalarField normalize(const ScalarField& field);

/// Vertices sorted by (value, index): simulation of simplicity by index.
std::vector<VertexId> vertex_order(std::span<const double> values);
std::vector<VertexId> vertex_order(const ScalarField& field);

/// Inverse permutation of an order: rank[order[i]] = i.
std::vector<VertexId> order_ranks(std::span<const VertexId> order);

/// Freudenthal-triangulation neighbors: in 2D the axis neighbors plus
/// +-(1,1); in 3D the axis neighbors plus +-(1,1,0), +-(0,1,1), +-(1,0,1),
/// +-(1,1,1).
std::vector<VertexId> neighbors(const GridShape& shape, VertexId vertex);

/// Appends neighbors into `out` (cleared first) to avoid allocation in sweeps.
void neighbors_into(const GridShape& shape, VertexId vertex, std::vector<VertexId>& out);

/// Row-major n_v x dims array of partial derivatives: central differences
/// inside, one-sided on the boundary, zero along axes of extent 1.
std::vector<double> discrete_gradient(const ScalarField& field);

/// Adjoint of discrete_gradient: maps an n_v x dims array back onto vertices.
std::vector<double> discrete_gradient_adjoint(const GridShape& shape,
                                              std::span<const double> gradient);

}  // namespace topointerp
