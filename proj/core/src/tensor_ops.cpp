#include "topointerp/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "fixed_sum.hpp"
#include "topointerp/error.hpp"

namespace topointerp::nn {

namespace {

struct AxisTap {
  int lo = 0;
  int hi = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
};

// align_corners = false: source coordinate (o + 0.5) / 2 - 0.5, clamped at 0.
std::vector<AxisTap> upsample_taps(int n) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    double src = (o + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, n - 1);
    const double l1 = src - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

// Views the volume as [outer][n][inner] around `axis`.
struct AxisView {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisView axis_view(int channels, const std::array<int, 3>& e, int axis) {
  AxisView v;
  v.n = static_cast<std::size_t>(e[static_cast<std::size_t>(axis)]);
  for (int a = 0; a < axis; ++a) v.inner *= static_cast<std::size_t>(e[static_cast<std::size_t>(a)]);
  v.outer = static_cast<std::size_t>(channels);
  for (int a = axis + 1; a < 3; ++a) v.outer *= static_cast<std::size_t>(e[static_cast<std::size_t>(a)]);
  return v;
}

void upsample_axis(const Volume& in, int axis, Volume& out) {
  auto e = in.extent;
  e[static_cast<std::size_t>(axis)] *= 2;
  out.resize(in.channels, e);
  const auto v = axis_view(in.channels, in.extent, axis);
  const auto taps = upsample_taps(static_cast<int>(v.n));
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* src = in.data.data() + o * v.n * v.inner;
    double* dst = out.data.data() + o * 2 * v.n * v.inner;
    for (std::size_t k = 0; k < 2 * v.n; ++k) {
      const auto& t = taps[k];
      const double* a = src + static_cast<std::size_t>(t.lo) * v.inner;
      const double* b = src + static_cast<std::size_t>(t.hi) * v.inner;
      double* d = dst + k * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) d[i] = t.w_lo * a[i] + t.w_hi * b[i];
    }
  }
}

void upsample_axis_adjoint(const Volume& grad_out, int axis, Volume& grad_in) {
  auto e = grad_out.extent;
  e[static_cast<std::size_t>(axis)] /= 2;
  grad_in.reshape(grad_out.channels, e);
  const auto v = axis_view(grad_out.channels, e, axis);
  const auto taps = upsample_taps(static_cast<int>(v.n));
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* src = grad_out.data.data() + o * 2 * v.n * v.inner;
    double* dst = grad_in.data.data() + o * v.n * v.inner;
    for (std::size_t k = 0; k < 2 * v.n; ++k) {
      const auto& t = taps[k];
      double* a = dst + static_cast<std::size_t>(t.lo) * v.inner;
      double* b = dst + static_cast<std::size_t>(t.hi) * v.inner;
      const double* s = src + k * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        a[i] += t.w_lo * s[i];
        b[i] += t.w_hi * s[i];
      }
    }
  }
}

int kernel_taps(int dims) { return dims == 3 ? 27 : 9; }

using RowSet = std::array<const double*, 9>;

// For each of B outputs: d_b[x] += sum_r w_b[3r] s_r[x-1] + w_b[3r+1] s_r[x]
// + w_b[3r+2] s_r[x+1], zero padded in x. w_b = w + b * w_stride.
template <int R, int B>
void rows_taps_add(const RowSet& s, const double* w, std::size_t w_stride,
                   const std::array<double*, 4>& d, int W) {
  auto edge = [&](int x) {
    for (int b = 0; b < B; ++b) {
      const double* wb = w + static_cast<std::size_t>(b) * w_stride;
      double acc = 0.0;
      for (int r = 0; r < R; ++r) {
        if (x > 0) acc += wb[3 * r] * s[r][x - 1];
        acc += wb[3 * r + 1] * s[r][x];
        if (x + 1 < W) acc += wb[3 * r + 2] * s[r][x + 1];
      }
      d[b][x] += acc;
    }
  };
  edge(0);
  if (W == 1) return;
  double wl[B][3 * R];
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < 3 * R; ++i) wl[b][i] = w[static_cast<std::size_t>(b) * w_stride + i];
  }
  const double* sp[R];
  for (int r = 0; r < R; ++r) sp[r] = s[static_cast<std::size_t>(r)];
  double* dp[B];
  for (int b = 0; b < B; ++b) dp[b] = d[static_cast<std::size_t>(b)];
#pragma omp simd
  for (int x = 1; x < W - 1; ++x) {
    double acc[B];
#pragma GCC unroll 4
    for (int b = 0; b < B; ++b) acc[b] = 0.0;
#pragma GCC unroll 9
    for (int r = 0; r < R; ++r) {
      const double l = sp[r][x - 1];
      const double m = sp[r][x];
      const double h = sp[r][x + 1];
#pragma GCC unroll 4
      for (int b = 0; b < B; ++b) acc[b] += wl[b][3 * r] * l + wl[b][3 * r + 1] * m + wl[b][3 * r + 2] * h;
    }
#pragma GCC unroll 4
    for (int b = 0; b < B; ++b) dp[b][x] += acc[b];
  }
  edge(W - 1);
}

// acc[0..2] += sum_x g[x] * s[x - 1], g[x] * s[x], g[x] * s[x + 1].
void row_taps_dot(const double* s, const double* g, int W, double* acc) {
  using detail::kLanes;
  double a[kLanes] = {}, b[kLanes] = {}, c[kLanes] = {};
  const auto n = static_cast<std::size_t>(W - 1);
  const std::size_t body = n - n % kLanes;
  for (std::size_t i = 1; i < body + 1; i += kLanes) {
#pragma omp simd
    for (std::size_t l = 0; l < kLanes; ++l) {
      a[l] += g[i + l] * s[i + l - 1];
      b[l] += g[i + l] * s[i + l];
      c[l] += g[i + l - 1] * s[i + l];
    }
  }
  double ta = 0.0, tb = g[0] * s[0], tc = 0.0;
  for (std::size_t x = body + 1; x < static_cast<std::size_t>(W); ++x) {
    ta += g[x] * s[x - 1];
    tb += g[x] * s[x];
    tc += g[x - 1] * s[x];
  }
  acc[0] += detail::fold_lanes(a) + ta;
  acc[1] += detail::fold_lanes(b) + tb;
  acc[2] += detail::fold_lanes(c) + tc;
}

// Source rows feeding output row (y, z), in tap order; missing rows map to
// `zero`. Returns the row count (3 in 2D, 9 in 3D).
int source_rows(const double* src, const std::array<int, 3>& e, int dims, int y, int z,
                const double* zero, RowSet& rows) {
  const auto [W, H, D] = e;
  const int zr = dims == 3 ? 1 : 0;
  int n = 0;
  for (int dz = -zr; dz <= zr; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      const int sz = z + dz;
      const int sy = y + dy;
      rows[static_cast<std::size_t>(n++)] =
          (sz < 0 || sz >= D || sy < 0 || sy >= H) ? zero : src + (static_cast<std::size_t>(sz) * H + sy) * W;
    }
  }
  return n;
}

const double* zero_row(int W) {
  thread_local std::vector<double> zeros;
  if (zeros.size() < static_cast<std::size_t>(W)) zeros.assign(static_cast<std::size_t>(W), 0.0);
  return zeros.data();
}

template <int B>
void correlate_add_block(const double* src, const std::array<double*, 4>& dst, const std::array<int, 3>& e,
                         int dims, const double* w, std::size_t w_stride) {
  const auto [W, H, D] = e;
  const double* zero = zero_row(W);
  RowSet rows{};
  std::array<double*, 4> d{};
  for (int z = 0; z < D; ++z) {
    for (int y = 0; y < H; ++y) {
      const std::size_t off = (static_cast<std::size_t>(z) * H + y) * W;
      for (int b = 0; b < B; ++b) d[static_cast<std::size_t>(b)] = dst[static_cast<std::size_t>(b)] + off;
      if (source_rows(src, e, dims, y, z, zero, rows) == 9) {
        rows_taps_add<9, B>(rows, w, w_stride, d, W);
      } else {
        rows_taps_add<3, B>(rows, w, w_stride, d, W);
      }
    }
  }
}

// dst_b[z,y,x] += sum_k w_b[k] * src[z + dz, y + dy, x + dx] over the 3^dims
// taps (x offset fastest in k) for `count` outputs, w_b = w + b * w_stride.
void correlate_add(const double* src, std::array<double*, 4> dst, int count, const std::array<int, 3>& e,
                   int dims, const double* w, std::size_t w_stride) {
  switch (count) {
    case 4: correlate_add_block<4>(src, dst, e, dims, w, w_stride); break;
    case 3: correlate_add_block<3>(src, dst, e, dims, w, w_stride); break;
    case 2: correlate_add_block<2>(src, dst, e, dims, w, w_stride); break;
    default: correlate_add_block<1>(src, dst, e, dims, w, w_stride); break;
  }
}

// grad_w[k] += sum_p g[p] * src[p + offset_k].
void correlate_dot(const double* src, const double* g, const std::array<int, 3>& e, int dims,
                   double* grad_w) {
  const auto [W, H, D] = e;
  const double* zero = zero_row(W);
  RowSet rows{};
  for (int z = 0; z < D; ++z) {
    for (int y = 0; y < H; ++y) {
      const double* gr = g + (static_cast<std::size_t>(z) * H + y) * W;
      const int n = source_rows(src, e, dims, y, z, zero, rows);
      for (int r = 0; r < n; ++r) {
        const double* sr = rows[static_cast<std::size_t>(r)];
        if (sr != zero) row_taps_dot(sr, gr, W, grad_w + 3 * r);
      }
    }
  }
}

// Row length from which direct dot products beat im2col + GEMM for weight
// gradients (measured on AVX-512).
constexpr int kWideRow = 64;

// Rows (c, k) of a (C*K) x P matrix holding the input shifted by tap k,
// zero padded.
void im2col(const Volume& in, int dims, std::vector<double>& cols) {
  const int K = kernel_taps(dims);
  const auto [W, H, D] = in.extent;
  const std::size_t P = in.spatial();
  const int zr = dims == 3 ? 1 : 0;
  cols.resize(static_cast<std::size_t>(in.channels) * K * P);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c).data();
    for (int k = 0; k < K; ++k) {
      const int dx = k % 3 - 1;
      const int dy = (k / 3) % 3 - 1;
      const int dz = zr != 0 ? k / 9 - 1 : 0;
      double* row = cols.data() + (static_cast<std::size_t>(c) * K + k) * P;
      const int x0 = std::max(0, -dx);
      const int x1 = std::min(W, W - dx);
      for (int z = 0; z < D; ++z) {
        const int sz = z + dz;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          double* d = row + (static_cast<std::size_t>(z) * H + y) * W;
          if (sz < 0 || sz >= D || sy < 0 || sy >= H) {
            std::fill(d, d + W, 0.0);
            continue;
          }
          const double* sr = src + (static_cast<std::size_t>(sz) * H + sy) * W + dx;
          std::fill(d, d + x0, 0.0);
          std::copy(sr + x0, sr + x1, d + x0);
          std::fill(d + x1, d + W, 0.0);
        }
      }
    }
  }
}

}  // namespace

void upsample2x(const Volume& in, int dims, Volume& out) {
  Volume a, b;
  upsample_axis(in, 0, a);
  if (dims == 3) {
    upsample_axis(a, 1, b);
    upsample_axis(b, 2, out);
  } else {
    upsample_axis(a, 1, out);
  }
}

void upsample2x_adjoint(const Volume& grad_out, int dims, Volume& grad_in) {
  Volume a, b;
  if (dims == 3) {
    upsample_axis_adjoint(grad_out, 2, b);
    upsample_axis_adjoint(b, 1, a);
  } else {
    upsample_axis_adjoint(grad_out, 1, a);
  }
  upsample_axis_adjoint(a, 0, grad_in);
}

void conv3(const Volume& in, std::span<const double> weight, std::span<const double> bias,
           int out_channels, int dims, Volume& out) {
  const int K = kernel_taps(dims);
  const auto per_out = static_cast<std::size_t>(in.channels) * K;
  if (weight.size() != out_channels * per_out || bias.size() != static_cast<std::size_t>(out_channels)) {
    throw Error(ErrorCode::ShapeMismatch, "convolution weight/bias shape mismatch");
  }
  out.resize(out_channels, in.extent);
  for (int o = 0; o < out_channels; ++o) {
    auto y = out.channel(o);
    std::fill(y.begin(), y.end(), bias[static_cast<std::size_t>(o)]);
  }
  for (int o0 = 0; o0 < out_channels; o0 += 4) {
    const int count = std::min(4, out_channels - o0);
    std::array<double*, 4> dst{};
    for (int b = 0; b < count; ++b) dst[static_cast<std::size_t>(b)] = out.channel(o0 + b).data();
    for (int c = 0; c < in.channels; ++c) {
      correlate_add(in.channel(c).data(), dst, count, in.extent, dims,
                    weight.data() + o0 * per_out + static_cast<std::size_t>(c) * K, per_out);
    }
  }
}

void conv3_backward(const Volume& in, std::span<const double> weight, const Volume& grad_out,
                    int dims, std::span<double> grad_weight, std::span<double> grad_bias,
                    Volume* grad_in) {
  const int K = kernel_taps(dims);
  const int out_channels = grad_out.channels;
  const auto per_out = static_cast<std::size_t>(in.channels) * K;
  if (grad_out.spatial() != in.spatial() || grad_weight.size() != out_channels * per_out ||
      weight.size() != out_channels * per_out || grad_bias.size() != static_cast<std::size_t>(out_channels)) {
    throw Error(ErrorCode::ShapeMismatch, "convolution backward shape mismatch");
  }
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto P = static_cast<Eigen::Index>(in.spatial());
  const auto rows = static_cast<Eigen::Index>(per_out);
  Eigen::Map<const RowMatrix> dy(grad_out.data.data(), out_channels, P);
  for (int o = 0; o < out_channels; ++o) {
    grad_bias[static_cast<std::size_t>(o)] += detail::fixed_sum(grad_out.channel(o).data(), in.spatial());
  }
  if (in.extent[0] >= kWideRow) {
    for (int o = 0; o < out_channels; ++o) {
      for (int c = 0; c < in.channels; ++c) {
        correlate_dot(in.channel(c).data(), grad_out.channel(o).data(), in.extent, dims,
                      grad_weight.data() + o * per_out + static_cast<std::size_t>(c) * K);
      }
    }
  } else {
    thread_local std::vector<double> cols;
    im2col(in, dims, cols);
    Eigen::Map<RowMatrix>(grad_weight.data(), out_channels, rows).noalias() +=
        dy * Eigen::Map<const RowMatrix>(cols.data(), rows, P).transpose();
  }
  if (grad_in == nullptr) return;
  // The adjoint of a correlation is a correlation with the mirrored kernel,
  // taken over output channels: flipped[c][o][k] = weight[o][c][K - 1 - k].
  grad_in->reshape(in.channels, in.extent);
  std::vector<double> flipped(weight.size());
  const auto per_in = static_cast<std::size_t>(out_channels) * K;
  for (int o = 0; o < out_channels; ++o) {
    for (int c = 0; c < in.channels; ++c) {
      for (int k = 0; k < K; ++k) {
        flipped[static_cast<std::size_t>(c) * per_in + static_cast<std::size_t>(o) * K + k] =
            weight[o * per_out + static_cast<std::size_t>(c) * K + (K - 1 - k)];
      }
    }
  }
  for (int c0 = 0; c0 < in.channels; c0 += 4) {
    const int count = std::min(4, in.channels - c0);
    std::array<double*, 4> dst{};
    for (int b = 0; b < count; ++b) dst[static_cast<std::size_t>(b)] = grad_in->channel(c0 + b).data();
    for (int o = 0; o < out_channels; ++o) {
      correlate_add(grad_out.channel(o).data(), dst, count, in.extent, dims,
                    flipped.data() + c0 * per_in + static_cast<std::size_t>(o) * K, per_in);
    }
  }
}

void instance_norm(const Volume& in, std::span<const double> scale, std::span<const double> shift,
                   Volume& out, NormCache& cache, double epsilon) {
  const auto n = in.spatial();
  out.resize(in.channels, in.extent);
  cache.normalized.resize(in.channels, in.extent);
  cache.inv_std.assign(static_cast<std::size_t>(in.channels), 0.0);
  for (int c = 0; c < in.channels; ++c) {
    const auto x = in.channel(c);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    cache.inv_std[static_cast<std::size_t>(c)] = inv_std;
    auto xhat = cache.normalized.channel(c);
    auto y = out.channel(c);
    const double g = scale[static_cast<std::size_t>(c)];
    const double b = shift[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < n; ++i) {
      xhat[i] = (x[i] - mean) * inv_std;
      y[i] = g * xhat[i] + b;
    }
  }
}

void instance_norm_backward(const NormCache& cache, std::span<const double> scale,
                            const Volume& grad_out, std::span<double> grad_scale,
                            std::span<double> grad_shift, Volume& grad_in) {
  const auto n = grad_out.spatial();
  const double inv_n = 1.0 / static_cast<double>(n);
  grad_in.reshape(grad_out.channels, grad_out.extent);
  for (int c = 0; c < grad_out.channels; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    const auto dy = grad_out.channel(c);
    const auto xhat = cache.normalized.channel(c);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dy[i];
      sum_dy_xhat += dy[i] * xhat[i];
    }
    grad_scale[cs] += sum_dy_xhat;
    grad_shift[cs] += sum_dy;
    const double k = scale[cs] * cache.inv_std[cs];
    auto dx = grad_in.channel(c);
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = k * (dy[i] - inv_n * sum_dy - xhat[i] * inv_n * sum_dy_xhat);
    }
  }
}

}  // namespace topointerp::nn
