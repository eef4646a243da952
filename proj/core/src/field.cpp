#include "topointerp/field.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "topointerp/error.hpp"

namespace topointerp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConstantField: return "ConstantField";
    case ErrorCode::OracleTooLarge: return "OracleTooLarge";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::InconsistentDiagram: return "InconsistentDiagram";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TapeMismatch: return "TapeMismatch";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::MissingVertexIds: return "MissingVertexIds";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::BadSlice: return "BadSlice";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

void GridShape::validate() const {
  if (dims != 2 && dims != 3) {
    throw Error(ErrorCode::InvalidArgument, "grid dims must be 2 or 3, got " + std::to_string(dims));
  }
  for (int e : extents) {
    if (e < 1) throw Error(ErrorCode::InvalidArgument, "grid extents must be positive");
  }
  if (dims == 2 && extents[2] != 1) {
    throw Error(ErrorCode::InvalidArgument, "2D grid must have z extent 1");
  }
}

ScalarField::ScalarField(GridShape s, std::vector<double> v) : shape(s), values(std::move(v)) {
  if (static_cast<std::int64_t>(values.size()) != shape.vertex_count()) {
    throw Error(ErrorCode::ShapeMismatch, "value count " + std::to_string(values.size()) +
                                              " does not match grid vertex count " +
                                              std::to_string(shape.vertex_count()));
  }
}

ScalarFieldSeries::ScalarFieldSeries(GridShape s, std::size_t count)
    : shape(s), fields(count), keyframes(count, false), times(uniform_times(count)) {}

std::size_t ScalarFieldSeries::keyframe_count() const {
  return static_cast<std::size_t>(std::count(keyframes.begin(), keyframes.end(), true));
}

std::vector<std::size_t> ScalarFieldSeries::keyframe_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (keyframes[k]) out.push_back(k);
  }
  return out;
}

std::vector<double> uniform_times(std::size_t count) {
  std::vector<double> t(count, 0.0);
  if (count < 2) return t;
  for (std::size_t k = 0; k < count; ++k) {
    t[k] = static_cast<double>(k) / static_cast<double>(count - 1);
  }
  return t;
}

ScalarField normalize(const ScalarField& field) {
  if (field.empty()) throw Error(ErrorCode::ConstantField, "empty field");
  const auto [lo, hi] = std::minmax_element(field.values.begin(), field.values.end());
  const double min = *lo;
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw Error(ErrorCode::ConstantField, "field has a single value");
  ScalarField out(field.shape, 0.0);
  for (std::size_t i = 0; i < field.size(); ++i) {
    out.values[i] = (field.values[i] - min) / range;
  }
  return out;
}

std::vector<VertexId> vertex_order(std::span<const double> values) {
  std::vector<VertexId> order(values.size());
  std::iota(order.begin(), order.end(), VertexId{0});
  std::sort(order.begin(), order.end(), [&](VertexId a, VertexId b) {
    const double va = values[static_cast<std::size_t>(a)];
    const double vb = values[static_cast<std::size_t>(b)];
    return va < vb || (va == vb && a < b);
  });
  return order;
}

std::vector<VertexId> vertex_order(const ScalarField& field) { return vertex_order(field.values); }

std::vector<VertexId> order_ranks(std::span<const VertexId> order) {
  std::vector<VertexId> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[static_cast<std::size_t>(order[i])] = static_cast<VertexId>(i);
  }
  return rank;
}

namespace {

constexpr std::array<std::array<int, 3>, 6> kOffsets2d{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {1, 1, 0}, {-1, -1, 0},
}};

constexpr std::array<std::array<int, 3>, 14> kOffsets3d{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1},
    {1, 1, 0}, {-1, -1, 0}, {0, 1, 1}, {0, -1, -1}, {1, 0, 1}, {-1, 0, -1},
    {1, 1, 1}, {-1, -1, -1},
}};

}  // namespace

void neighbors_into(const GridShape& shape, VertexId vertex, std::vector<VertexId>& out) {
  out.clear();
  const auto c = shape.coords(vertex);
  auto visit = [&](const auto& offsets) {
    for (const auto& o : offsets) {
      const int x = c[0] + o[0];
      const int y = c[1] + o[1];
      const int z = c[2] + o[2];
      if (x < 0 || y < 0 || z < 0 || x >= shape.extents[0] || y >= shape.extents[1] ||
          z >= shape.extents[2]) {
        continue;
      }
      out.push_back(shape.index(x, y, z));
    }
  };
  if (shape.dims == 3) {
    visit(kOffsets3d);
  } else {
    visit(kOffsets2d);
  }
}

std::vector<VertexId> neighbors(const GridShape& shape, VertexId vertex) {
  std::vector<VertexId> out;
  out.reserve(14);
  neighbors_into(shape, vertex, out);
  return out;
}

namespace {

// Visits every (vertex, axis, lo, hi, weight) term of the stencil: the
// derivative along `axis` at vertex v is weight * (f[hi] - f[lo]).
template <typename Fn>
void for_each_stencil(const GridShape& shape, Fn&& fn) {
  const auto n = shape.vertex_count();
  const std::array<std::int64_t, 3> stride{1, shape.extents[0],
                                           std::int64_t{shape.extents[0]} * shape.extents[1]};
  for (VertexId v = 0; v < n; ++v) {
    const auto c = shape.coords(v);
    for (int axis = 0; axis < shape.dims; ++axis) {
      const int extent = shape.extents[static_cast<std::size_t>(axis)];
      if (extent < 2) continue;
      const int p = c[static_cast<std::size_t>(axis)];
      const auto s = stride[static_cast<std::size_t>(axis)];
      if (p == 0) {
        fn(v, axis, v, v + s, 1.0);
      } else if (p == extent - 1) {
        fn(v, axis, v - s, v, 1.0);
      } else {
        fn(v, axis, v - s, v + s, 0.5);
      }
    }
  }
}

}  // namespace

std::vector<double> discrete_gradient(const ScalarField& field) {
  const auto dims = static_cast<std::size_t>(field.shape.dims);
  std::vector<double> grad(field.size() * dims, 0.0);
  for_each_stencil(field.shape, [&](VertexId v, int axis, VertexId lo, VertexId hi, double w) {
    grad[static_cast<std::size_t>(v) * dims + static_cast<std::size_t>(axis)] =
        w * (field[hi] - field[lo]);
  });
  return grad;
}

std::vector<double> discrete_gradient_adjoint(const GridShape& shape,
                                              std::span<const double> gradient) {
  const auto dims = static_cast<std::size_t>(shape.dims);
  if (gradient.size() != static_cast<std::size_t>(shape.vertex_count()) * dims) {
    throw Error(ErrorCode::ShapeMismatch, "gradient array does not match grid");
  }
  std::vector<double> out(static_cast<std::size_t>(shape.vertex_count()), 0.0);
  for_each_stencil(shape, [&](VertexId v, int axis, VertexId lo, VertexId hi, double w) {
    const double g = gradient[static_cast<std::size_t>(v) * dims + static_cast<std::size_t>(axis)];
    out[static_cast<std::size_t>(hi)] += w * g;
    out[static_cast<std::size_t>(lo)] -= w * g;
  });
  return out;
}

}  // namespace topointerp
