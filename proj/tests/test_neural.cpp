#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "topointerp/error.hpp"
#include "topointerp/network.hpp"
#include "topointerp/tensor_ops.hpp"

using namespace topointerp;
using namespace topointerp::nn;

namespace {

Volume random_volume(int c, std::array<int, 3> e, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Volume v(c, e);
  for (auto& x : v.data) x = n(rng);
  return v;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

ArchConfig tiny() {
  ArchConfig cfg;
  cfg.dims = 2;
  cfg.encoding_width = 4;
  cfg.base_resolution = 2;
  cfg.channels = {2, 1};
  cfg.hidden = 3;
  cfg.dropout_p = 0.0;
  return cfg;
}

double sum_squares(const ScalarField& f) { return dot(f.values, f.values); }

}  // namespace

TEST_CASE("positional encoding") {
  const auto e0 = positional_encoding(0.0, 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(e0[2 * i] == 0.0);
    CHECK(e0[2 * i + 1] == 1.0);
  }
  const auto e1 = positional_encoding(1.0, 8);
  CHECK(std::abs(e1[0]) < 1e-12);
  CHECK(e1[1] == doctest::Approx(1.0));
  CHECK(positional_encoding(0.25, 8)[0] == doctest::Approx(1.0));
  const auto e = positional_encoding(0.3, 6);
  for (int i = 0; i < 3; ++i) {
    const double w = 2 * M_PI * 0.3 / std::pow(10000.0, 2.0 * i / 6);
    CHECK(e[2 * i] == doctest::Approx(std::sin(w)));
    CHECK(e[2 * i + 1] == doctest::Approx(std::cos(w)));
  }
}

TEST_CASE("convolution matches the direct definition") {
  std::mt19937_64 rng(1);
  struct Case {
    int cin, cout, dims;
    std::array<int, 3> e;
  };
  for (const auto& c : {Case{1, 1, 2, {5, 4, 1}}, Case{3, 5, 2, {8, 8, 1}}, Case{6, 7, 2, {70, 3, 1}},
                        Case{2, 3, 3, {4, 3, 5}}, Case{4, 4, 3, {66, 2, 2}}}) {
    const int k = c.dims == 3 ? 27 : 9;
    const auto in = random_volume(c.cin, c.e, rng);
    const auto w = random_vector(static_cast<std::size_t>(c.cout * c.cin * k), rng);
    const auto b = random_vector(static_cast<std::size_t>(c.cout), rng);
    Volume out;
    conv3(in, w, b, c.cout, c.dims, out);
    const auto ref = oracle::naive_conv(in, w, b, c.cout, c.dims);
    REQUIRE(out.data.size() == ref.data.size());
    for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(out.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));

    // Adjoint identities for the input and weight gradients.
    const auto y = random_volume(c.cout, c.e, rng);
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    Volume gin;
    conv3_backward(in, w, y, c.dims, gw, gb, &gin);
    const std::vector<double> zero_b(b.size(), 0.0);
    const auto linear = oracle::naive_conv(in, w, zero_b, c.cout, c.dims);
    const double lhs = dot(linear.data, y.data);
    CHECK(dot(in.data, gin.data) == doctest::Approx(lhs).epsilon(1e-10));
    CHECK(dot(w, gw) == doctest::Approx(lhs).epsilon(1e-10));
    for (int o = 0; o < c.cout; ++o) CHECK(gb[static_cast<std::size_t>(o)] == doctest::Approx(std::accumulate(y.channel(o).begin(), y.channel(o).end(), 0.0)));
  }
}

TEST_CASE("upsampling matches the interpolation formula and its adjoint") {
  std::mt19937_64 rng(2);
  for (int dims : {2, 3}) {
    const std::array<int, 3> e{3, 4, dims == 3 ? 2 : 1};
    const auto x = random_volume(2, e, rng);
    Volume up;
    upsample2x(x, dims, up);
    const auto ref = oracle::naive_upsample(x, dims);
    REQUIRE(up.extent == ref.extent);
    for (std::size_t i = 0; i < ref.data.size(); ++i) CHECK(up.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-14));
    const auto y = random_volume(2, up.extent, rng);
    Volume adj;
    upsample2x_adjoint(y, dims, adj);
    CHECK(std::abs(dot(up.data, y.data) - dot(x.data, adj.data)) < 1e-10);
  }
}

TEST_CASE("instance norm standardizes each channel") {
  std::mt19937_64 rng(3);
  auto x = random_volume(3, {6, 5, 1}, rng);
  // Spread well above epsilon so the variance check can be tight.
  for (auto& v : x.data) v = 30 * v + 2;
  const std::vector<double> scale(3, 1.0), shift(3, 0.0);
  Volume out;
  NormCache cache;
  instance_norm(x, scale, shift, out, cache);
  for (int c = 0; c < 3; ++c) {
    const auto ch = cache.normalized.channel(c);
    double mean = 0, var = 0;
    for (double v : ch) mean += v;
    mean /= static_cast<double>(ch.size());
    for (double v : ch) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ch.size());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("zero network outputs one half") {
  auto cfg = tiny();
  auto params = init_parameters(cfg, 1);
  for (auto& a : params.arrays) std::fill(a.data.begin(), a.data.end(), 0.0);
  const auto out = forward(params, cfg, 0.4);
  for (double v : out.values) CHECK(v == 0.5);
}

TEST_CASE("output extents") {
  ArchConfig c3;
  c3.dims = 3;
  c3.base_resolution = 8;
  c3.channels = {8, 8, 8, 8, 8};
  CHECK(c3.output_shape() == GridShape(128, 128, 128));
  ArchConfig c2;
  c2.base_resolution = 8;
  c2.channels = {64, 64, 32, 32, 16, 16, 8};
  CHECK(c2.output_shape() == GridShape(512, 512));
  ArchConfig bad = tiny();
  bad.encoding_width = 5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("outputs lie in (0, 1) and eval mode is deterministic") {
  ArchConfig cfg = tiny();
  cfg.base_resolution = 4;
  cfg.channels = {4, 3, 2};
  cfg.encoding_width = 8;
  cfg.hidden = 16;
  cfg.dropout_p = 0.3;
  const auto params = init_parameters(cfg, 5);
  const auto a = forward(params, cfg, 0.37);
  const auto b = forward(params, cfg, 0.37);
  CHECK(a.values == b.values);
  CHECK(a.shape == GridShape(16, 16));
  for (double v : a.values) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  const DropoutSpec d{0.3, 9, 2, 1};
  CHECK(forward(params, cfg, 0.37, nullptr, d).values == forward(params, cfg, 0.37, nullptr, d).values);
  CHECK(forward(params, cfg, 0.37, nullptr, d).values != a.values);
}

TEST_CASE("init is deterministic and fan-in scaled") {
  ArchConfig cfg = tiny();
  cfg.channels = {32, 16};
  const auto a = init_parameters(cfg, 7);
  const auto b = init_parameters(cfg, 7);
  REQUIRE(a.arrays.size() == b.arrays.size());
  for (std::size_t i = 0; i < a.arrays.size(); ++i) CHECK(a.arrays[i].data == b.arrays[i].data);
  const auto* w = a.find("block1.conv.weight");
  REQUIRE(w != nullptr);
  CHECK(w->shape == std::vector<int>{16, 32, 3, 3});
  double var = 0;
  for (double v : w->data) var += v * v;
  var /= static_cast<double>(w->size());
  const double expected = 2.0 / (32 * 9);
  CHECK(std::abs(var - expected) < 0.2 * expected);
  for (const auto& arr : a.arrays) {
    if (arr.name.find("norm") != std::string::npos && arr.name.find("scale") != std::string::npos) {
      for (double v : arr.data) CHECK(v == 1.0);
    }
    if (arr.name.find("shift") != std::string::npos || arr.name.find("bias") != std::string::npos) {
      for (double v : arr.data) CHECK(v == 0.0);
    }
  }
  CHECK(init_parameters(cfg, 8).arrays[0].data != a.arrays[0].data);
}

TEST_CASE("frozen set covers the last projection layer and the first block") {
  ArchConfig cfg = tiny();
  cfg.channels = {2, 2, 1};
  const auto names = phase_two_frozen_arrays(cfg);
  CHECK(std::find(names.begin(), names.end(), "reshape.fc2.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "block1.res.conv2.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "block2.conv.weight") == names.end());
  CHECK(std::find(names.begin(), names.end(), "reshape.fc1.weight") == names.end());
}

TEST_CASE("backward matches finite differences on every parameter") {
  for (const auto& cfg : {tiny(), [] {
         auto c = tiny();
         c.channels = {2, 2, 1};
         c.dims = 3;
         c.base_resolution = 1;
         return c;
       }()}) {
    auto params = init_parameters(cfg, 13);
    // Non-trivial norm affine so their gradients are exercised.
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (auto& a : params.arrays) {
      if (a.name.find("scale") != std::string::npos || a.name.find("shift") != std::string::npos) {
        for (auto& v : a.data) v = u(rng) - (a.name.find("shift") != std::string::npos ? 1.0 : 0.0);
      }
    }
    const double t = 0.3;
    ForwardTape tape;
    const auto out = forward(params, cfg, t, &tape);
    std::vector<double> g(out.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2 * out.values[i];
    auto grads = zero_gradients(params);
    (void)backward(params, tape, g, grads);
    const double h = 1e-4;
    double worst = 0;
    for (std::size_t a = 0; a < params.arrays.size(); ++a) {
      for (std::size_t i = 0; i < params.arrays[a].size(); ++i) {
        auto& v = params.arrays[a].data[i];
        const double keep = v;
        v = keep + h;
        const double up = sum_squares(forward(params, cfg, t));
        v = keep - h;
        const double down = sum_squares(forward(params, cfg, t));
        v = keep;
        const double fd = (up - down) / (2 * h);
        const double an = grads[a][i];
        worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
      }
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("backward edge cases") {
  const auto cfg = tiny();
  const auto params = init_parameters(cfg, 3);
  ForwardTape tape;
  const auto out = forward(params, cfg, 0.5, &tape);
  auto grads = zero_gradients(params);
  (void)backward(params, tape, std::vector<double>(out.size(), 0.0), grads);
  for (const auto& g : grads) {
    for (double v : g) CHECK(v == 0.0);
  }
  try {
    (void)backward(params, ForwardTape{}, std::vector<double>(out.size(), 0.0), grads);
    FAIL("expected TapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TapeMismatch);
  }
  ArchConfig other = cfg;
  other.hidden = 4;
  try {
    (void)forward(params, other, 0.5);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("identity residual passes the upstream gradient through the skip") {
  // With the second residual conv and its norm shift zeroed, the residual
  // branch adds nothing, so the block output equals relu(activated).
  auto cfg = tiny();
  auto params = init_parameters(cfg, 4);
  for (auto* name : {"block1.res.conv2.weight", "block1.res.conv2.bias", "block1.res.norm2.scale", "block1.res.norm2.shift"}) {
    auto* a = params.find(name);
    std::fill(a->data.begin(), a->data.end(), 0.0);
  }
  ForwardTape tape;
  (void)forward(params, cfg, 0.2, &tape);
  const auto& b = tape.blocks[0];
  REQUIRE(b.output.data.size() == b.activated.data.size());
  for (std::size_t i = 0; i < b.output.data.size(); ++i) CHECK(b.output.data[i] == doctest::Approx(b.activated.data[i]));
}
