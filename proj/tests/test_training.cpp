#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "topointerp/error.hpp"
#include "topointerp/training.hpp"

using namespace topointerp;

namespace {

nn::ArchConfig small_arch(int r0, std::vector<int> channels) {
  nn::ArchConfig a;
  a.dims = 2;
  a.encoding_width = 8;
  a.base_resolution = r0;
  a.channels = std::move(channels);
  a.hidden = 16;
  a.dropout_p = 0.0;
  return a;
}

struct Data {
  ScalarFieldSeries series;
  std::vector<PersistenceDiagram> diagrams;
};

// Smooth random fields: a few bumps per timestep, normalized.
Data make_data(GridShape shape, std::size_t n, std::vector<bool> keys, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Data d;
  d.series = ScalarFieldSeries(shape, n);
  d.series.keyframes = std::move(keys);
  std::vector<std::array<double, 3>> bumps(3);
  for (auto& b : bumps) b = {u(rng), u(rng), 0.5 + 0.5 * u(rng)};
  for (std::size_t k = 0; k < n; ++k) {
    ScalarField f(shape);
    for (VertexId v = 0; v < shape.vertex_count(); ++v) {
      const auto c = shape.coords(v);
      const double x = c[0] / double(shape.extents[0] - 1), y = c[1] / double(shape.extents[1] - 1);
      for (const auto& b : bumps) {
        const double bx = b[0] + 0.1 * double(k), by = b[1];
        f[v] += b[2] * std::exp(-((x - bx) * (x - bx) + (y - by) * (y - by)) / 0.05);
      }
    }
    d.series.fields[k] = normalize(f);
    d.diagrams.push_back(compute_diagram(d.series.fields[k]));
  }
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_CASE("mse loss") {
  const ScalarField key(GridShape(2, 2), {0.1, 0.2, 0.3, 0.4});
  CHECK(loss_mse(key, key).value == 0.0);
  ScalarField shifted = key;
  for (auto& v : shifted.values) v += 0.1;
  const auto l = loss_mse(shifted, key);
  CHECK(l.value == doctest::Approx(0.01));
  for (double g : l.gradient) CHECK(g == doctest::Approx(2 * 0.1 / 4));
  CHECK_THROWS_AS(loss_mse(key, ScalarField(GridShape(4, 1))), Error);
}

TEST_CASE("gradient loss") {
  const ScalarField flat(GridShape(3, 1), 0.0);
  CHECK(loss_grad(flat, flat).value == 0.0);
  CHECK(loss_grad(ScalarField(GridShape(3, 1), {0, 0.5, 1}), flat).value == doctest::Approx(0.125));
  CHECK(loss_grad(ScalarField(GridShape(3, 1), {0, 2, 4}), flat).value == doctest::Approx(1.5));
  CHECK(smooth_l1(0.5, 0.0) == doctest::Approx(0.125));
  CHECK(smooth_l1(2.0, 0.0) == doctest::Approx(1.5));
}

TEST_CASE("critical value loss") {
  const ScalarField pred(GridShape(3, 1), {0.0, 0.5, 1.0});
  PersistenceDiagram d;
  d.pairs = {{PairType::InfMin, 0.0, kInfinity, 0, kNoVertex}, {PairType::InfMax, 1.0, kInfinity, 2, kNoVertex}};
  CHECK(loss_cv(pred, d).value == 0.0);
  PersistenceDiagram one;
  one.pairs = {{PairType::InfMax, 0.7, kInfinity, 1, kNoVertex}};
  CHECK(loss_cv(pred, one).value == doctest::Approx(0.04));

  const ScalarField four(GridShape(4, 1), {0.0, 0.0, 0.0, 0.0});
  PersistenceDiagram three;
  three.pairs = {{PairType::MinSaddle, 0.2, 0.6, 1, 2},
                 {PairType::InfMin, 0.0, kInfinity, 0, kNoVertex},
                 {PairType::InfMax, 1.0, kInfinity, 3, kNoVertex}};
  CHECK(loss_cv(four, three).value == doctest::Approx((0.04 + 0.36 + 1.0) / 4));

  PersistenceDiagram missing;
  missing.pairs = {{PairType::MinSaddle, 0.2, 0.6, kNoVertex, kNoVertex}};
  try {
    (void)loss_cv(four, missing);
    FAIL("expected MissingVertexIds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingVertexIds);
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(2);
  const auto key = oracle::random_field(GridShape(5, 4), rng);
  auto pred = oracle::random_field(GridShape(5, 4), rng);
  const auto target = compute_diagram(key);
  for (auto fn : {&loss_mse, &loss_grad}) {
    const auto l = fn(pred, key);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      auto up = pred, down = pred;
      up.values[i] += 1e-6;
      down.values[i] -= 1e-6;
      CHECK(l.gradient[i] == doctest::Approx((fn(up, key).value - fn(down, key).value) / 2e-6).epsilon(1e-5));
    }
  }
  const auto l = loss_cv(pred, target);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto up = pred, down = pred;
    up.values[i] += 1e-6;
    down.values[i] -= 1e-6;
    CHECK(l.gradient[i] == doctest::Approx((loss_cv(up, target).value - loss_cv(down, target).value) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("adam step") {
  nn::ModelParameters p;
  p.arrays.push_back({"w", {3}, {1.0, -2.0, 0.5}, false});
  p.arrays.push_back({"f", {1}, {4.0}, true});
  auto state = make_adam_state(p);
  const auto before = p.arrays;
  adam_step(p, {{0, 0, 0}, {0}}, state, {}, 0.1, 0.0);
  CHECK(p.arrays[0].data == before[0].data);

  // First step from a fresh state: bias-corrected moments give g / (|g| + eps).
  state = make_adam_state(p);
  const nn::ParameterGradients g{{0.5, -0.25, 0.0}, {1.0}};
  adam_step(p, g, state, {}, 0.1, 0.01);
  const std::vector<double> w = before[0].data;
  for (std::size_t i = 0; i < 3; ++i) {
    const double step = g[0][i] / (std::abs(g[0][i]) + 1e-8);
    CHECK(p.arrays[0].data[i] == doctest::Approx(w[i] - 0.1 * (step + 0.01 * w[i])).epsilon(1e-14));
  }
  CHECK(p.arrays[1].data[0] == 4.0);
}

TEST_CASE("objective gradient matches finite differences with frozen matchings") {
  const auto arch = small_arch(2, {3, 2});
  auto data = make_data(GridShape(4, 4), 3, {true, false, true}, 5);
  const auto problem = make_problem(data.series, data.diagrams, 0.0, true);
  auto params = nn::init_parameters(arch, 21);
  ObjectiveOptions opts;
  opts.weights = {0.1, 1.0, 1.0};
  opts.prune_ratio = 0.0;
  const auto first = evaluate_objective(params, arch, problem, opts, false);
  REQUIRE(first.matchings.size() == 3);
  opts.frozen_matchings = &first.matchings;
  const auto r = evaluate_objective(params, arch, problem, opts, true);
  CHECK(r.terms.total == doctest::Approx(first.terms.total).epsilon(1e-12));
  CHECK(r.terms.total == doctest::Approx(r.terms.mse + 0.1 * r.terms.grad + r.terms.cv + r.terms.w2).epsilon(1e-12));
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    for (std::size_t i = 0; i < params.arrays[a].size(); ++i) {
      auto& v = params.arrays[a].data[i];
      const double keep = v;
      v = keep + h;
      const double up = evaluate_objective(params, arch, problem, opts, false).terms.total;
      v = keep - h;
      const double down = evaluate_objective(params, arch, problem, opts, false).terms.total;
      v = keep;
      const double fd = (up - down) / (2 * h);
      const double an = r.gradients[a][i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("threads do not change the objective beyond rounding") {
  const auto arch = small_arch(4, {4, 2});
  auto data = make_data(GridShape(8, 8), 5, {true, false, false, false, true}, 6);
  const auto problem = make_problem(data.series, data.diagrams, 0.01, true);
  const auto params = nn::init_parameters(arch, 3);
  ObjectiveOptions opts;
  opts.weights = {0.0, 1.0, 1.0};
  const auto one = evaluate_objective(params, arch, problem, opts, true);
  opts.threads = 3;
  const auto three = evaluate_objective(params, arch, problem, opts, true);
  CHECK(three.terms.total == doctest::Approx(one.terms.total).epsilon(1e-12));
  for (std::size_t a = 0; a < one.gradients.size(); ++a) {
    for (std::size_t i = 0; i < one.gradients[a].size(); ++i) {
      CHECK(three.gradients[a][i] == doctest::Approx(one.gradients[a][i]).epsilon(1e-9).scale(1e-3));
    }
  }
}

TEST_CASE("mse only sees keyframes") {
  const auto arch = small_arch(4, {4, 2});
  auto data = make_data(GridShape(8, 8), 3, {true, false, true}, 7);
  const auto problem = make_problem(data.series, data.diagrams, 0.01, true);
  CHECK(problem.keyframe_count() == 2);
  CHECK(!problem.keyframes[1].has_value());
  const auto params = nn::init_parameters(arch, 3);
  ObjectiveOptions opts;
  opts.weights = {0.0, 0.0, 0.0};
  const auto r = evaluate_objective(params, arch, problem, opts, false);
  double expected = 0;
  for (std::size_t k : {0u, 2u}) {
    expected += loss_mse(nn::forward(params, arch, problem.times[k]), data.series.fields[k]).value / 2;
  }
  CHECK(r.terms.mse == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::isnan(r.terms.w2));
}

TEST_CASE("training schedule") {
  TrainConfig cfg;
  cfg.arch = small_arch(4, {8, 4});
  cfg.arch.dropout_p = 0.1;
  cfg.lr = 5e-3;
  cfg.n1 = 30;
  cfg.n2 = 0;
  cfg.seed = 4;
  auto data = make_data(GridShape(8, 8), 4, {true, false, false, true}, 8);

  reset_diagram_computation_count();
  const auto s = train(data.series, data.diagrams, cfg);
  CHECK(diagram_computation_count() == 0);
  REQUIRE(s.history.size() == 30);
  std::vector<double> head, tail;
  for (int i = 0; i < 10; ++i) {
    head.push_back(s.history[static_cast<std::size_t>(i)].terms.total);
    tail.push_back(s.history[static_cast<std::size_t>(20 + i)].terms.total);
  }
  CHECK(median(tail) < median(head));
  for (const auto& r : s.history) CHECK(r.phase == 1);

  // Same seed, same result.
  const auto again = train(data.series, data.diagrams, cfg);
  CHECK(again.params.arrays[0].data == s.params.arrays[0].data);

  cfg.n2 = 3;
  nn::ModelParameters at_switch;
  const auto s2 = train(data.series, data.diagrams, cfg, [&](const EpochRecord& r, const TrainState& st) {
    if (r.epoch == cfg.n1) at_switch = st.params;
  });
  CHECK(diagram_computation_count() > 0);
  REQUIRE(s2.history.size() == 33);
  CHECK(s2.history.back().phase == 2);
  CHECK(std::isfinite(s2.history.back().terms.w2));
  const auto frozen = nn::phase_two_frozen_arrays(cfg.arch);
  for (std::size_t a = 0; a < s2.params.arrays.size(); ++a) {
    const auto& arr = s2.params.arrays[a];
    const bool is_frozen = std::find(frozen.begin(), frozen.end(), arr.name) != frozen.end();
    CHECK(arr.frozen == is_frozen);
    if (is_frozen) {
      CHECK(arr.data == at_switch.arrays[a].data);
    } else if (arr.name == "head.conv.weight") {
      CHECK(arr.data != at_switch.arrays[a].data);
    }
  }
}

TEST_CASE("phase 2 restarts the optimizer") {
  TrainConfig cfg;
  cfg.arch = small_arch(4, {8, 4});
  cfg.n1 = 4;
  cfg.n2 = 2;
  auto data = make_data(GridShape(8, 8), 3, {true, false, true}, 10);
  CHECK(train(data.series, data.diagrams, cfg).adam.step == 2);
  cfg.reset_adam_in_phase2 = false;
  CHECK(train(data.series, data.diagrams, cfg).adam.step == 6);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.arch = small_arch(4, {8, 4});
  cfg.lr = 5e-3;
  cfg.n1 = 5;
  cfg.n2 = 0;
  auto data = make_data(GridShape(8, 8), 3, {true, false, true}, 11);
  const auto constant = train(data.series, data.diagrams, cfg);
  cfg.lr_cosine = true;
  cfg.lr_floor = 1.0;
  CHECK(train(data.series, data.diagrams, cfg).params.arrays[0].data == constant.params.arrays[0].data);
  cfg.lr_floor = 0.05;
  const auto cosine = train(data.series, data.diagrams, cfg);
  // The first step uses the full rate in both runs.
  CHECK(cosine.history[1].terms.total == constant.history[1].terms.total);
  CHECK(cosine.params.arrays[0].data != constant.params.arrays[0].data);

  // A separate phase-2 rate leaves phase 1 alone.
  cfg.lr_cosine = false;
  cfg.n2 = 2;
  cfg.lr_phase2 = 1e-5;
  nn::ModelParameters at_switch;
  const auto slow = train(data.series, data.diagrams, cfg, [&](const EpochRecord& r, const TrainState& st) {
    if (r.epoch == cfg.n1) at_switch = st.params;
  });
  const auto& head = slow.params.find("head.conv.bias")->data;
  const auto& before = at_switch.find("head.conv.bias")->data;
  // Two Adam steps move a coordinate by at most a few learning rates.
  CHECK(std::abs(head[0] - before[0]) < 1e-4);
  CHECK(head[0] != before[0]);
}

TEST_CASE("critical-value term alone fits its targets") {
  const auto arch = small_arch(4, {16, 8});
  auto data = make_data(GridShape(8, 8), 2, {true, true}, 9);
  const auto problem = make_problem(data.series, data.diagrams, 0.01, true);
  auto params = nn::init_parameters(arch, 1);
  auto adam = make_adam_state(params);
  ObjectiveOptions opts;
  opts.weights = {0.0, 1.0, 0.0};
  opts.include_mse = false;
  double cv = 1;
  for (int e = 0; e < 400 && cv >= 1e-4; ++e) {
    const auto r = evaluate_objective(params, arch, problem, opts, true);
    cv = r.terms.cv;
    adam_step(params, r.gradients, adam, {}, 3e-3, 0.0);
  }
  CHECK(cv < 1e-4);
}

TEST_CASE("training errors") {
  TrainConfig cfg;
  cfg.arch = small_arch(4, {4, 2});
  cfg.n1 = 2;
  cfg.n2 = 0;
  auto data = make_data(GridShape(8, 8), 3, {true, false, true}, 10);
  data.series.fields[0].values[5] = std::nan("");
  try {
    (void)train(data.series, data.diagrams, cfg);
    FAIL("expected DivergedLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergedLoss);
  }
  auto shape_data = make_data(GridShape(16, 16), 3, {true, false, true}, 10);
  CHECK_THROWS_AS(train(shape_data.series, shape_data.diagrams, cfg), Error);
  data.diagrams.pop_back();
  CHECK_THROWS_AS(train(data.series, data.diagrams, cfg), Error);
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
