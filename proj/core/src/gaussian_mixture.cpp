#include "topointerp/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "topointerp/error.hpp"

namespace topointerp {

namespace {

// Portable [0,1) draw; std distributions differ between standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

// Linear ramp of a knot-defined path over [k0, k1].
template <class T>
void ramp(std::vector<T>& path, std::size_t k0, std::size_t k1, const T& a, const T& b,
          T (*lerp)(const T&, const T&, double)) {
  for (std::size_t k = k0; k <= k1; ++k) {
    const double s = k1 == k0 ? 1.0 : static_cast<double>(k - k0) / static_cast<double>(k1 - k0);
    path[k] = lerp(a, b, s);
  }
}

double lerp_scalar(const double& a, const double& b, double s) { return a + s * (b - a); }

std::array<double, 2> lerp_point(const std::array<double, 2>& a, const std::array<double, 2>& b,
                                 double s) {
  return {a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])};
}

}  // namespace

std::vector<GaussianTrack> default_tracks(std::size_t count, std::uint64_t seed) {
  if (count < 2) throw Error(ErrorCode::InvalidArgument, "need at least two timesteps");
  constexpr int kTracks = 6;
  std::mt19937_64 rng(seed);
  const std::size_t last = count - 1;
  const std::array<std::size_t, 4> knots{0, static_cast<std::size_t>(std::lround(last / 3.0)),
                                         static_cast<std::size_t>(std::lround(2.0 * last / 3.0)),
                                         last};
  std::vector<GaussianTrack> tracks(kTracks);
  for (auto& tr : tracks) {
    tr.centers.resize(count);
    tr.amplitudes.resize(count);
    std::array<double, 2> c{draw(rng, 0.15, 0.85), draw(rng, 0.15, 0.85)};
    double a = draw(rng, 0.4, 1.0);
    for (int seg = 0; seg < 3; ++seg) {
      const bool changes_amp = seg != 1 && unit(rng) < 0.5;
      const bool moves = seg != 0;
      double a_next = changes_amp ? draw(rng, 0.2, 1.0) : a;
      std::array<double, 2> c_next = c;
      if (moves) {
        const double angle = draw(rng, 0.0, 2.0 * std::numbers::pi);
        const double step = draw(rng, 0.05, 0.2);
        c_next = {std::clamp(c[0] + step * std::cos(angle), 0.1, 0.9),
                  std::clamp(c[1] + step * std::sin(angle), 0.1, 0.9)};
      }
      ramp(tr.amplitudes, knots[seg], knots[seg + 1], a, a_next, lerp_scalar);
      ramp(tr.centers, knots[seg], knots[seg + 1], c, c_next, lerp_point);
      a = a_next;
      c = c_next;
    }
  }
  return tracks;
}

GaussianTrack moving_gaussian(std::size_t count, std::array<double, 2> from,
                              std::array<double, 2> to, double sigma) {
  if (count < 2) throw Error(ErrorCode::InvalidArgument, "need at least two timesteps");
  GaussianTrack tr;
  tr.sigma = sigma;
  tr.centers.resize(count);
  tr.amplitudes.assign(count, 1.0);
  ramp(tr.centers, 0, count - 1, from, to, lerp_point);
  return tr;
}

ScalarFieldSeries gen_gaussian_mixture(const GridShape& shape, std::size_t count,
                                       const std::vector<GaussianTrack>& tracks,
                                       std::uint64_t seed) {
  shape.validate();
  if (shape.dims != 2) throw Error(ErrorCode::InvalidArgument, "the generator builds 2D fields");
  if (count < 2) throw Error(ErrorCode::InvalidArgument, "need at least two timesteps");
  const auto used = tracks.empty() ? default_tracks(count, seed) : tracks;
  for (const auto& tr : used) {
    if (tr.centers.size() != count || tr.amplitudes.size() != count) {
      throw Error(ErrorCode::InvalidArgument, "track paths must have one entry per timestep");
    }
    if (!(tr.sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "track width must be positive");
  }
  const int cx = shape.extents[0];
  const int cy = shape.extents[1];
  auto position = [](int i, int extent) {
    return extent > 1 ? static_cast<double>(i) / (extent - 1) : 0.0;
  };
  ScalarFieldSeries series(shape, count);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < count; ++k) {
    ScalarField f(shape);
    for (int y = 0; y < cy; ++y) {
      const double py = position(y, cy);
      for (int x = 0; x < cx; ++x) {
        const double px = position(x, cx);
        double v = 0.0;
        for (const auto& tr : used) {
          const double dx = px - tr.centers[k][0];
          const double dy = py - tr.centers[k][1];
          v += tr.amplitudes[k] * std::exp(-(dx * dx + dy * dy) / (2.0 * tr.sigma * tr.sigma));
        }
        f[shape.index(x, y)] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    series.fields[k] = std::move(f);
  }
  if (!(hi > lo)) throw Error(ErrorCode::ConstantField, "generated series is constant");
  const double inv = 1.0 / (hi - lo);
  for (auto& f : series.fields) {
    for (auto& v : f.values) v = (v - lo) * inv;
  }
  return series;
}

std::vector<bool> select_keyframes(std::size_t count, double fraction) {
  if (count < 2) throw Error(ErrorCode::InvalidArgument, "need at least two timesteps");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "keyframe fraction must lie in (0, 1]");
  }
  const auto wanted = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(count)));
  const std::size_t n = std::min(count, std::max<std::size_t>(2, wanted));
  std::vector<bool> flags(count, false);
  for (std::size_t j = 0; j < n; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(count - 1) / static_cast<double>(n - 1);
    flags[static_cast<std::size_t>(std::lround(pos))] = true;
  }
  return flags;
}

}  // namespace topointerp
