#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topointerp/field.hpp"
#include "topointerp/tensor_ops.hpp"

namespace topointerp::nn {

/// Shape of the time-to-field decoder. channels = (C_0, ..., C_L): C_0
/// channels at resolution r0 after the reshape projection, then L upsampling
/// blocks, then a final 3^dims convolution down to one channel.
struct ArchConfig {
  int dims = 2;
  int encoding_width = 128;  // T
  int base_resolution = 8;   // r0
  std::vector<int> channels{32, 16, 8};
  int hidden = 512;
  double dropout_p = 0.1;

  [[nodiscard]] int blocks() const { return static_cast<int>(channels.size()) - 1; }
  [[nodiscard]] int output_extent() const { return base_resolution << blocks(); }
  [[nodiscard]] GridShape output_shape() const;
  /// Throws ShapeMismatch on inconsistent values.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
  bool frozen = false;

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
};

struct ModelParameters {
  std::vector<ParamArray> arrays;

  [[nodiscard]] std::size_t total_count() const;
  [[nodiscard]] const ParamArray* find(std::string_view name) const;
  ParamArray* find(std::string_view name);
};

/// One gradient buffer per parameter array, same order.
using ParameterGradients = std::vector<std::vector<double>>;

ParameterGradients zero_gradients(const ModelParameters& params);
void fill_zero(ParameterGradients& grads);

/// entry 2i = sin(2 pi t / 10000^(2i/T)), entry 2i+1 = cos(...).
std::vector<double> positional_encoding(double t, int width);

/// He-style fan-in uniform weights (variance 2 / fan_in), zero biases, unit
/// norm scale, zero shift. Deterministic in `seed`.
ModelParameters init_parameters(const ArchConfig& cfg, std::uint64_t seed);

/// Throws ShapeMismatch unless `params` has exactly the arrays `cfg` implies.
void check_parameters(const ArchConfig& cfg, const ModelParameters& params);

/// Names of the arrays frozen during topology correction: the last reshape
/// layer and everything in the first decoder block.
std::vector<std::string> phase_two_frozen_arrays(const ArchConfig& cfg);

struct DropoutSpec {
  double p = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t timestep = 0;
};

struct BlockTape {
  Volume upsampled;
  NormCache norm;
  Volume activated;  // block conv -> norm -> relu
  NormCache res_norm1;
  Volume res_hidden;  // relu(norm1(conv1(activated)))
  NormCache res_norm2;
  Volume output;  // relu(activated + norm2(...)) before dropout
  std::vector<std::uint8_t> dropout_mask;
};

/// Activations recorded by a forward pass, enough for an exact backward.
struct ForwardTape {
  ArchConfig cfg;
  std::vector<double> encoding;
  std::vector<double> hidden;  // relu(fc1) before dropout
  std::vector<std::uint8_t> hidden_mask;
  std::vector<double> projected;  // relu(fc2)
  std::vector<BlockTape> blocks;
  Volume head_output;  // sigmoid output
  double dropout_p = 0.0;
  bool valid = false;

  void clear() { *this = ForwardTape{}; }
};

/// Evaluates the decoder at time t. Dropout is active only when `dropout`
/// is given with p > 0; masks are drawn from (seed, epoch, timestep).
ScalarField forward(const ModelParameters& params, const ArchConfig& cfg, double t,
                    ForwardTape* tape = nullptr, const std::optional<DropoutSpec>& dropout = {});

/// Reverse pass of the recorded forward. Parameter gradients are added into
/// `grads`; the returned vector is the gradient with respect to the
/// positional encoding.
std::vector<double> backward(const ModelParameters& params, const ForwardTape& tape,
                             std::span<const double> output_gradient, ParameterGradients& grads);

}  // namespace topointerp::nn
