#include "topointerp/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Core>

#include "fixed_sum.hpp"

#include "topointerp/error.hpp"

namespace topointerp::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// y = W x + b with W row-major (y.size() x x.size()).
void dense_forward(const std::vector<double>& weight, const std::vector<double>& bias,
                   const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t n = x.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    y[r] = detail::fixed_dot(weight.data() + r * n, x.data(), n) + bias[r];
  }
}

// gx = W^T gy, one row at a time so each entry sums in row order.
void dense_input_grad(const std::vector<double>& weight, const std::vector<double>& gy,
                      std::vector<double>& gx) {
  const std::size_t n = gx.size();
  std::fill(gx.begin(), gx.end(), 0.0);
  for (std::size_t r = 0; r < gy.size(); ++r) {
    const double g = gy[r];
    const double* w = weight.data() + r * n;
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) gx[i] += w[i] * g;
  }
}

constexpr std::size_t kFc1Weight = 0;
constexpr std::size_t kFc1Bias = 1;
constexpr std::size_t kFc2Weight = 2;
constexpr std::size_t kFc2Bias = 3;
constexpr std::size_t kBlockArrays = 12;

// Offsets within a block's run of arrays.
enum BlockSlot : std::size_t {
  kConvW, kConvB, kNormScale, kNormShift,
  kRes1W, kRes1B, kResNorm1Scale, kResNorm1Shift,
  kRes2W, kRes2B, kResNorm2Scale, kResNorm2Shift,
};

std::size_t block_index(int block, BlockSlot slot) {
  return 4 + kBlockArrays * static_cast<std::size_t>(block) + slot;
}

std::size_t head_weight_index(const ArchConfig& cfg) {
  return 4 + kBlockArrays * static_cast<std::size_t>(cfg.blocks());
}

int kernel_taps(int dims) { return dims == 3 ? 27 : 9; }

std::array<int, 3> spatial_extent(const ArchConfig& cfg, int resolution) {
  return {resolution, resolution, cfg.dims == 3 ? resolution : 1};
}

std::size_t projection_size(const ArchConfig& cfg) {
  std::size_t n = static_cast<std::size_t>(cfg.channels.front());
  for (int d = 0; d < cfg.dims; ++d) n *= static_cast<std::size_t>(cfg.base_resolution);
  return n;
}

struct ArraySpec {
  std::string name;
  std::vector<int> shape;
  enum class Init { Weight, Zero, One } init;
  int fan_in = 1;
};

std::vector<ArraySpec> array_specs(const ArchConfig& cfg) {
  std::vector<ArraySpec> specs;
  const int proj = static_cast<int>(projection_size(cfg));
  const int k = kernel_taps(cfg.dims);
  auto kernel_shape = [&](int out, int in) {
    std::vector<int> s{out, in, 3, 3};
    if (cfg.dims == 3) s.push_back(3);
    return s;
  };
  using I = ArraySpec::Init;
  specs.push_back({"reshape.fc1.weight", {cfg.hidden, cfg.encoding_width}, I::Weight, cfg.encoding_width});
  specs.push_back({"reshape.fc1.bias", {cfg.hidden}, I::Zero});
  specs.push_back({"reshape.fc2.weight", {proj, cfg.hidden}, I::Weight, cfg.hidden});
  specs.push_back({"reshape.fc2.bias", {proj}, I::Zero});
  for (int b = 0; b < cfg.blocks(); ++b) {
    const int cin = cfg.channels[static_cast<std::size_t>(b)];
    const int cout = cfg.channels[static_cast<std::size_t>(b) + 1];
    const std::string p = "block" + std::to_string(b + 1) + ".";
    specs.push_back({p + "conv.weight", kernel_shape(cout, cin), I::Weight, cin * k});
    specs.push_back({p + "conv.bias", {cout}, I::Zero});
    specs.push_back({p + "norm.scale", {cout}, I::One});
    specs.push_back({p + "norm.shift", {cout}, I::Zero});
    specs.push_back({p + "res.conv1.weight", kernel_shape(cout, cout), I::Weight, cout * k});
    specs.push_back({p + "res.conv1.bias", {cout}, I::Zero});
    specs.push_back({p + "res.norm1.scale", {cout}, I::One});
    specs.push_back({p + "res.norm1.shift", {cout}, I::Zero});
    specs.push_back({p + "res.conv2.weight", kernel_shape(cout, cout), I::Weight, cout * k});
    specs.push_back({p + "res.conv2.bias", {cout}, I::Zero});
    specs.push_back({p + "res.norm2.scale", {cout}, I::One});
    specs.push_back({p + "res.norm2.shift", {cout}, I::Zero});
  }
  const int last = cfg.channels.back();
  specs.push_back({"head.conv.weight", kernel_shape(1, last), I::Weight, last * k});
  specs.push_back({"head.conv.bias", {1}, I::Zero});
  return specs;
}

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Draws a keep(1)/drop(0) mask and applies inverted dropout in place.
void apply_dropout(std::span<double> values, double p, std::mt19937_64& rng,
                   std::vector<std::uint8_t>& mask) {
  mask.resize(values.size());
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool keep = unit_uniform(rng) >= p;
    mask[i] = keep ? 1 : 0;
    values[i] = keep ? values[i] * scale : 0.0;
  }
}

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

// Gradient through relu (and optional inverted dropout) given the stored
// post-activation values.
void relu_backward(std::span<const double> activated, std::span<const std::uint8_t> mask,
                   double scale, std::span<double> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const bool pass = activated[i] > 0.0 && (mask.empty() || mask[i] != 0);
    grad[i] = pass ? grad[i] * (mask.empty() ? 1.0 : scale) : 0.0;
  }
}


}  // namespace

GridShape ArchConfig::output_shape() const {
  const int e = output_extent();
  return dims == 3 ? GridShape(e, e, e) : GridShape(e, e);
}

void ArchConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ShapeMismatch, what); };
  if (dims != 2 && dims != 3) fail("architecture dims must be 2 or 3");
  if (encoding_width <= 0 || encoding_width % 2 != 0) fail("encoding width T must be positive and even");
  if (base_resolution < 1) fail("base resolution must be positive");
  if (channels.size() < 2) fail("channel ladder needs C_0 and at least one block");
  for (int c : channels) {
    if (c <= 0) fail("channel counts must be positive");
  }
  if (hidden <= 0) fail("hidden width must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout probability must lie in [0, 1)");
}

std::size_t ModelParameters::total_count() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.size();
  return n;
}

const ParamArray* ModelParameters::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

ParamArray* ModelParameters::find(std::string_view name) {
  for (auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

ParameterGradients zero_gradients(const ModelParameters& params) {
  ParameterGradients g;
  g.reserve(params.arrays.size());
  for (const auto& a : params.arrays) g.emplace_back(a.size(), 0.0);
  return g;
}

void fill_zero(ParameterGradients& grads) {
  for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
}

std::vector<double> positional_encoding(double t, int width) {
  if (width <= 0 || width % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "positional encoding width must be positive and even");
  }
  std::vector<double> pe(static_cast<std::size_t>(width));
  for (int i = 0; i < width / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / static_cast<double>(width));
    const double arg = 2.0 * std::numbers::pi * t / freq;
    pe[static_cast<std::size_t>(2 * i)] = std::sin(arg);
    pe[static_cast<std::size_t>(2 * i + 1)] = std::cos(arg);
  }
  return pe;
}

ModelParameters init_parameters(const ArchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(splitmix64(seed));
  ModelParameters params;
  for (const auto& spec : array_specs(cfg)) {
    ParamArray a{spec.name, spec.shape, std::vector<double>(shape_size(spec.shape), 0.0), false};
    switch (spec.init) {
      case ArraySpec::Init::Weight: {
        const double bound = std::sqrt(6.0 / spec.fan_in);
        for (double& w : a.data) w = (2.0 * unit_uniform(rng) - 1.0) * bound;
        break;
      }
      case ArraySpec::Init::One: std::fill(a.data.begin(), a.data.end(), 1.0); break;
      case ArraySpec::Init::Zero: break;
    }
    params.arrays.push_back(std::move(a));
  }
  return params;
}

void check_parameters(const ArchConfig& cfg, const ModelParameters& params) {
  cfg.validate();
  const auto specs = array_specs(cfg);
  if (specs.size() != params.arrays.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter array count does not match architecture");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& a = params.arrays[i];
    if (a.name != specs[i].name || a.shape != specs[i].shape || a.size() != shape_size(a.shape)) {
      throw Error(ErrorCode::ShapeMismatch, "parameter array " + specs[i].name + " has wrong shape");
    }
  }
}

namespace {

// Name-free version of check_parameters for the hot path.
void check_sizes(const ArchConfig& cfg, const ModelParameters& params) {
  const std::size_t expected = head_weight_index(cfg) + 2;
  bool ok = params.arrays.size() == expected;
  const auto k = static_cast<std::size_t>(kernel_taps(cfg.dims));
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  const auto proj = projection_size(cfg);
  auto size_is = [&](std::size_t i, std::size_t n) { ok = ok && params.arrays[i].size() == n; };
  if (ok) {
    size_is(kFc1Weight, hidden * static_cast<std::size_t>(cfg.encoding_width));
    size_is(kFc1Bias, hidden);
    size_is(kFc2Weight, proj * hidden);
    size_is(kFc2Bias, proj);
    for (int b = 0; b < cfg.blocks(); ++b) {
      const auto cin = static_cast<std::size_t>(cfg.channels[static_cast<std::size_t>(b)]);
      const auto cout = static_cast<std::size_t>(cfg.channels[static_cast<std::size_t>(b) + 1]);
      for (std::size_t s = 0; s < kBlockArrays; ++s) {
        std::size_t n = cout;
        if (s == kConvW) n = cout * cin * k;
        if (s == kRes1W || s == kRes2W) n = cout * cout * k;
        size_is(block_index(b, static_cast<BlockSlot>(s)), n);
      }
    }
    const auto hw = head_weight_index(cfg);
    size_is(hw, static_cast<std::size_t>(cfg.channels.back()) * k);
    size_is(hw + 1, 1);
  }
  if (!ok) throw Error(ErrorCode::ShapeMismatch, "parameters do not match the architecture");
}

}  // namespace

std::vector<std::string> phase_two_frozen_arrays(const ArchConfig& cfg) {
  std::vector<std::string> names{"reshape.fc2.weight", "reshape.fc2.bias"};
  for (const auto& spec : array_specs(cfg)) {
    if (spec.name.rfind("block1.", 0) == 0) names.push_back(spec.name);
  }
  return names;
}

ScalarField forward(const ModelParameters& params, const ArchConfig& cfg, double t,
                    ForwardTape* tape, const std::optional<DropoutSpec>& dropout) {
  cfg.validate();
  check_sizes(cfg, params);
  const auto& A = params.arrays;
  const bool drop = dropout.has_value() && dropout->p > 0.0;
  std::mt19937_64 rng;
  if (drop) {
    rng.seed(splitmix64(dropout->seed ^ splitmix64(dropout->epoch ^ splitmix64(dropout->timestep))));
  }
  ForwardTape local;
  ForwardTape& tp = tape != nullptr ? *tape : local;
  tp.clear();
  tp.cfg = cfg;
  tp.dropout_p = drop ? dropout->p : 0.0;

  tp.encoding = positional_encoding(t, cfg.encoding_width);
  const auto H = static_cast<Eigen::Index>(cfg.hidden);
  const auto P = static_cast<Eigen::Index>(projection_size(cfg));

  tp.hidden.resize(static_cast<std::size_t>(H));
  dense_forward(A[kFc1Weight].data, A[kFc1Bias].data, tp.encoding, tp.hidden);
  relu_inplace(tp.hidden);
  std::vector<double> hidden_used = tp.hidden;
  if (drop) apply_dropout(hidden_used, dropout->p, rng, tp.hidden_mask);

  tp.projected.resize(static_cast<std::size_t>(P));
  dense_forward(A[kFc2Weight].data, A[kFc2Bias].data, hidden_used, tp.projected);
  relu_inplace(tp.projected);

  Volume x(cfg.channels.front(), spatial_extent(cfg, cfg.base_resolution));
  std::copy(tp.projected.begin(), tp.projected.end(), x.data.begin());

  tp.blocks.resize(static_cast<std::size_t>(cfg.blocks()));
  Volume tmp, normed;
  for (int b = 0; b < cfg.blocks(); ++b) {
    auto& bt = tp.blocks[static_cast<std::size_t>(b)];
    const int cout = cfg.channels[static_cast<std::size_t>(b) + 1];
    auto arr = [&](BlockSlot s) -> const std::vector<double>& { return A[block_index(b, s)].data; };

    upsample2x(x, cfg.dims, bt.upsampled);
    conv3(bt.upsampled, arr(kConvW), arr(kConvB), cout, cfg.dims, tmp);
    instance_norm(tmp, arr(kNormScale), arr(kNormShift), bt.activated, bt.norm);
    relu_inplace(bt.activated.data);

    conv3(bt.activated, arr(kRes1W), arr(kRes1B), cout, cfg.dims, tmp);
    instance_norm(tmp, arr(kResNorm1Scale), arr(kResNorm1Shift), bt.res_hidden, bt.res_norm1);
    relu_inplace(bt.res_hidden.data);

    conv3(bt.res_hidden, arr(kRes2W), arr(kRes2B), cout, cfg.dims, tmp);
    instance_norm(tmp, arr(kResNorm2Scale), arr(kResNorm2Shift), normed, bt.res_norm2);

    bt.output = bt.activated;
    for (std::size_t i = 0; i < normed.data.size(); ++i) bt.output.data[i] += normed.data[i];
    relu_inplace(bt.output.data);
    if (drop) apply_dropout(bt.output.data, dropout->p, rng, bt.dropout_mask);
    x = bt.output;
  }

  const auto hw = head_weight_index(cfg);
  conv3(x, A[hw].data, A[hw + 1].data, 1, cfg.dims, tp.head_output);
  for (double& v : tp.head_output.data) v = 1.0 / (1.0 + std::exp(-v));
  tp.valid = true;

  return ScalarField(cfg.output_shape(), tp.head_output.data);
}

std::vector<double> backward(const ModelParameters& params, const ForwardTape& tape,
                             std::span<const double> output_gradient, ParameterGradients& grads) {
  const auto& cfg = tape.cfg;
  if (!tape.valid) throw Error(ErrorCode::TapeMismatch, "tape holds no forward pass");
  check_sizes(cfg, params);
  if (output_gradient.size() != tape.head_output.data.size()) {
    throw Error(ErrorCode::TapeMismatch, "output gradient size does not match the recorded output");
  }
  if (grads.size() != params.arrays.size()) {
    throw Error(ErrorCode::TapeMismatch, "gradient buffers do not match parameters");
  }
  const auto& A = params.arrays;
  const double drop_scale = tape.dropout_p > 0.0 ? 1.0 / (1.0 - tape.dropout_p) : 1.0;

  // Sigmoid head.
  Volume grad(1, tape.head_output.extent);
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const double s = tape.head_output.data[i];
    grad.data[i] = output_gradient[i] * s * (1.0 - s);
  }
  const auto hw = head_weight_index(cfg);
  const Volume& head_in = cfg.blocks() > 0 ? tape.blocks.back().output : Volume{};
  Volume grad_x;
  conv3_backward(head_in, A[hw].data, grad, cfg.dims, grads[hw], grads[hw + 1], &grad_x);

  Volume g_s, g_tmp, g_res, g_act;
  for (int b = cfg.blocks() - 1; b >= 0; --b) {
    const auto& bt = tape.blocks[static_cast<std::size_t>(b)];
    auto arr = [&](BlockSlot s) -> const std::vector<double>& { return A[block_index(b, s)].data; };
    auto garr = [&](BlockSlot s) -> std::vector<double>& { return grads[block_index(b, s)]; };

    // out = dropout(relu(activated + norm2(...)))
    g_s = std::move(grad_x);
    relu_backward(bt.output.data, bt.dropout_mask, drop_scale, g_s.data);

    // Residual branch.
    instance_norm_backward(bt.res_norm2, arr(kResNorm2Scale), g_s, garr(kResNorm2Scale),
                           garr(kResNorm2Shift), g_tmp);
    conv3_backward(bt.res_hidden, arr(kRes2W), g_tmp, cfg.dims, garr(kRes2W), garr(kRes2B), &g_res);
    relu_backward(bt.res_hidden.data, {}, 1.0, g_res.data);
    instance_norm_backward(bt.res_norm1, arr(kResNorm1Scale), g_res, garr(kResNorm1Scale),
                           garr(kResNorm1Shift), g_tmp);
    conv3_backward(bt.activated, arr(kRes1W), g_tmp, cfg.dims, garr(kRes1W), garr(kRes1B), &g_act);

    // Skip path joins the residual branch at `activated`.
    for (std::size_t i = 0; i < g_act.data.size(); ++i) g_act.data[i] += g_s.data[i];
    relu_backward(bt.activated.data, {}, 1.0, g_act.data);
    instance_norm_backward(bt.norm, arr(kNormScale), g_act, garr(kNormScale), garr(kNormShift), g_tmp);
    Volume g_up;
    conv3_backward(bt.upsampled, arr(kConvW), g_tmp, cfg.dims, garr(kConvW), garr(kConvB), &g_up);
    upsample2x_adjoint(g_up, cfg.dims, grad_x);
  }

  // Reshape projection.
  const auto T = static_cast<Eigen::Index>(cfg.encoding_width);
  const auto H = static_cast<Eigen::Index>(cfg.hidden);
  const auto P = static_cast<Eigen::Index>(projection_size(cfg));
  std::vector<double> g_proj(grad_x.data.begin(), grad_x.data.end());
  relu_backward(tape.projected, {}, 1.0, g_proj);

  std::vector<double> hidden_used = tape.hidden;
  if (!tape.hidden_mask.empty()) {
    for (std::size_t i = 0; i < hidden_used.size(); ++i) {
      hidden_used[i] = tape.hidden_mask[i] != 0 ? hidden_used[i] * drop_scale : 0.0;
    }
  }
  ConstVecMap gp(g_proj.data(), P);
  RowMap(grads[kFc2Weight].data(), P, H).noalias() += gp * ConstVecMap(hidden_used.data(), H).transpose();
  VecMap(grads[kFc2Bias].data(), P) += gp;
  std::vector<double> g_hidden(static_cast<std::size_t>(H));
  dense_input_grad(A[kFc2Weight].data, g_proj, g_hidden);
  relu_backward(tape.hidden, tape.hidden_mask, drop_scale, g_hidden);

  ConstVecMap gh(g_hidden.data(), H);
  RowMap(grads[kFc1Weight].data(), H, T).noalias() += gh * ConstVecMap(tape.encoding.data(), T).transpose();
  VecMap(grads[kFc1Bias].data(), H) += gh;
  std::vector<double> g_encoding(static_cast<std::size_t>(T));
  dense_input_grad(A[kFc1Weight].data, g_hidden, g_encoding);
  return g_encoding;
}

}  // namespace topointerp::nn
