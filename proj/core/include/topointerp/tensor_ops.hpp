#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace topointerp::nn {

/// Channel-major activation block: data[c][z][y][x], x fastest.
struct Volume {
  int channels = 0;
  std::array<int, 3> extent{1, 1, 1};
  std::vector<double> data;

  Volume() = default;
  Volume(int c, std::array<int, 3> e, double fill = 0.0)
      : channels(c), extent(e), data(static_cast<std::size_t>(c) * e[0] * e[1] * e[2], fill) {}

  [[nodiscard]] std::size_t spatial() const noexcept {
    return static_cast<std::size_t>(extent[0]) * extent[1] * extent[2];
  }
  [[nodiscard]] std::span<double> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * spatial(), spatial()};
  }
  [[nodiscard]] std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * spatial(), spatial()};
  }
  void reshape(int c, std::array<int, 3> e) {
    channels = c;
    extent = e;
    data.assign(static_cast<std::size_t>(c) * e[0] * e[1] * e[2], 0.0);
  }
  /// Like reshape, but leaves the contents unspecified.
  void resize(int c, std::array<int, 3> e) {
    channels = c;
    extent = e;
    data.resize(static_cast<std::size_t>(c) * e[0] * e[1] * e[2]);
  }
};

/// x2 bilinear (dims = 2) or trilinear (dims = 3) upsampling with
/// align_corners = false semantics (edge samples clamp).
void upsample2x(const Volume& in, int dims, Volume& out);

/// Transpose of upsample2x: scatters output gradients onto the coarse grid.
void upsample2x_adjoint(const Volume& grad_out, int dims, Volume& grad_in);

/// 3^dims cross-correlation, stride 1, zero padding 1. `weight` is
/// (out, in, 3, 3[, 3]) row-major.
void conv3(const Volume& in, std::span<const double> weight, std::span<const double> bias,
           int out_channels, int dims, Volume& out);

/// Accumulates weight/bias gradients; writes the input gradient when
/// `grad_in` is non-null.
void conv3_backward(const Volume& in, std::span<const double> weight, const Volume& grad_out,
                    int dims, std::span<double> grad_weight, std::span<double> grad_bias,
                    Volume* grad_in);

struct NormCache {
  Volume normalized;            // (x - mean) * inv_std
  std::vector<double> inv_std;  // per channel
};

inline constexpr double kInstanceNormEpsilon = 1e-5;

/// Per-channel standardisation over the spatial extent followed by a learned
/// affine map.
void instance_norm(const Volume& in, std::span<const double> scale, std::span<const double> shift,
                   Volume& out, NormCache& cache, double epsilon = kInstanceNormEpsilon);

void instance_norm_backward(const NormCache& cache, std::span<const double> scale,
                            const Volume& grad_out, std::span<double> grad_scale,
                            std::span<double> grad_shift, Volume& grad_in);

}  // namespace topointerp::nn
