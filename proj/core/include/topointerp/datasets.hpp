#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "topointerp/field.hpp"

namespace topointerp {

inline constexpr double kDefaultGaussianWidth = 0.04;

/// One Gaussian bump followed over N timesteps. Centers are in [0,1]^2
/// grid-normalized coordinates.
struct GaussianTrack {
  std::vector<std::array<double, 2>> centers;
  std::vector<double> amplitudes;
  double sigma = kDefaultGaussianWidth;
};

/// Sums the tracks at every timestep and rescales the whole series with one
/// global min/max. An empty `tracks` list builds the default six-track
/// scenario from `seed`: amplitude-only changes, then motion only, then both,
/// in three equal segments. Keyframe flags are left all false.
ScalarFieldSeries gen_gaussian_mixture(const GridShape& shape, std::size_t count,
                                       const std::vector<GaussianTrack>& tracks,
                                       std::uint64_t seed);

/// The six tracks of the default scenario.
std::vector<GaussianTrack> default_tracks(std::size_t count, std::uint64_t seed);

/// A single Gaussian travelling in a straight line from `from` to `to` at
/// constant amplitude.
GaussianTrack moving_gaussian(std::size_t count, std::array<double, 2> from,
                              std::array<double, 2> to, double sigma = kDefaultGaussianWidth);

/// max(2, round(fraction * N)) evenly spaced flags including both ends.
std::vector<bool> select_keyframes(std::size_t count, double fraction);

}  // namespace topointerp
