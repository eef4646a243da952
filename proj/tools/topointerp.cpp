// topointerp: generate, train, query and evaluate time-conditioned field
// decoders from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "topointerp/config.hpp"
#include "topointerp/datasets.hpp"
#include "topointerp/error.hpp"
#include "topointerp/evaluation.hpp"
#include "topointerp/io.hpp"
#include "topointerp/parallel.hpp"
#include "topointerp/persistence.hpp"
#include "topointerp/training.hpp"
#include "topointerp/wasserstein.hpp"

namespace fs = std::filesystem;
using namespace topointerp;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

// Bad flag values that CLI11 validators cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  int threads = available_threads();
  bool quiet = false;

  // gen
  std::vector<int> extents{64, 64};
  std::size_t steps = 30;
  double key_fraction = 0.1;
  std::uint64_t seed = 1;
  std::string scenario = "mixture";
  bool keyframes_only = false;

  // shared inputs
  std::string series;
  std::string diagrams;
  std::string model;
  std::string config;
  std::string out;

  // distance
  std::string diagram_a, diagram_b;
  double q = 2.0;

  // train
  std::string log;

  // query / baseline
  std::optional<double> t;

  // eval / diagram
  double prune_ratio = 0.01;

  // export
  std::size_t step = 0;
  int axis = -1;
  int slice = 0;
};

GridShape shape_from(const std::vector<int>& e) {
  GridShape s;
  if (e.size() == 2) {
    s = GridShape(e[0], e[1]);
  } else if (e.size() == 3) {
    s = GridShape(e[0], e[1], e[2]);
  } else {
    throw UsageError("--shape takes 2 or 3 extents");
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return s;
}

// Diagrams from a directory, or computed from a fully populated series.
std::vector<PersistenceDiagram> diagrams_for(const Options& o, const ScalarFieldSeries& s) {
  if (!o.diagrams.empty()) {
    auto d = read_diagram_dir(o.diagrams);
    if (d.size() != s.count()) {
      throw Error(ErrorCode::InvalidArgument, "diagram directory holds " + std::to_string(d.size()) +
                                                  " files for " + std::to_string(s.count()) + " timesteps");
    }
    return d;
  }
  for (std::size_t k = 0; k < s.count(); ++k) {
    if (!s.has_field(k)) {
      throw Error(ErrorCode::MissingGroundTruth, "series lacks timestep " + std::to_string(k) +
                                                     "; pass --diagrams");
    }
  }
  std::vector<PersistenceDiagram> d(s.count());
  parallel_for(s.count(), o.threads, [&](int, std::size_t k) { d[k] = compute_diagram(s.fields[k]); });
  return d;
}

int cmd_gen(const Options& o) {
  const auto shape = shape_from(o.extents);
  std::vector<GaussianTrack> tracks;
  if (o.scenario == "moving") {
    tracks.push_back(moving_gaussian(o.steps, {0.2, 0.5}, {0.8, 0.5}));
  } else if (o.scenario != "mixture") {
    throw UsageError("unknown scenario " + o.scenario);
  }
  auto s = gen_gaussian_mixture(shape, o.steps, tracks, o.seed);
  s.keyframes = select_keyframes(o.steps, o.key_fraction);
  if (o.keyframes_only) {
    for (std::size_t k = 0; k < s.count(); ++k) {
      if (!s.keyframes[k]) s.fields[k] = ScalarField{};
    }
  }
  write_series(fs::path(o.out), s);
  if (!o.quiet) std::printf("wrote %zu timesteps (%zu keyframes) to %s\n", s.count(), s.keyframe_count(), o.out.c_str());
  return 0;
}

int cmd_diagram(const Options& o) {
  const auto s = read_series(fs::path(o.series));
  std::vector<PersistenceDiagram> d(s.count());
  parallel_for(s.count(), o.threads, [&](int, std::size_t k) {
    if (!s.has_field(k)) throw Error(ErrorCode::MissingGroundTruth, "timestep " + std::to_string(k) + " has no field");
    d[k] = compute_diagram(s.fields[k]);
    if (o.prune_ratio > 0.0) d[k] = prune(d[k], o.prune_ratio);
  });
  fs::create_directories(o.out);
  write_diagram_dir(o.out, d);
  if (!o.quiet) std::printf("wrote %zu diagrams to %s\n", d.size(), o.out.c_str());
  return 0;
}

int cmd_distance(const Options& o) {
  const auto a = read_diagram_csv(fs::path(o.diagram_a));
  const auto b = read_diagram_csv(fs::path(o.diagram_b));
  WassersteinOptions w;
  w.q = o.q;
  const auto [dist, matching] = wasserstein_distance(a, b, w);
  const double nw = normalized_wasserstein(a, b, w);
  std::printf("W%g %.17g\nNW%g %.17g\n", o.q, dist, o.q, nw);
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    out << "source_idx,target_idx,cost\n";
    for (const auto& m : matching.assignments) {
      out << (m.source == kDiagonal ? std::string("diagonal") : std::to_string(m.source)) << ','
          << (m.target == kDiagonal ? std::string("diagonal") : std::to_string(m.target)) << ','
          << fmt::format("{:.17g}", m.cost) << '\n';
    }
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + o.out);
  }
  return 0;
}

int cmd_train(const Options& o) {
  auto rc = load_config(o.config);
  rc.train.threads = o.threads;
  const auto s = read_series(fs::path(o.series));
  if (s.shape != rc.grid) throw Error(ErrorCode::ShapeMismatch, "series grid does not match the config");
  const auto d = diagrams_for(o, s);
  std::ofstream log;
  if (!o.log.empty()) {
    log.open(o.log);
    log << "epoch,phase,L_MSE,L_grad,L_CV,L_W2,total,wall_seconds\n";
  }
  const int total_epochs = rc.train.n1 + rc.train.n2;
  const auto state = train(s, d, rc.train, [&](const EpochRecord& r, const TrainState&) {
    if (log.is_open()) {
      log << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.3f}\n", r.epoch, r.phase, r.terms.mse,
                         r.terms.grad, r.terms.cv, r.terms.w2, r.terms.total, r.wall_seconds);
    }
    if (!o.quiet && (r.epoch % 25 == 0 || r.epoch == total_epochs)) {
      spdlog::info("epoch {}/{} phase {} loss {:.5g}", r.epoch, total_epochs, r.phase, r.terms.total);
    }
  });
  write_checkpoint(fs::path(o.out), make_checkpoint(rc, state.params));
  if (!o.quiet) std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

ScalarFieldSeries single_field_series(ScalarField f) {
  ScalarFieldSeries s(f.shape, 1);
  s.keyframes = {true};
  s.fields[0] = std::move(f);
  return s;
}

int cmd_query(const Options& o) {
  if (!o.t || *o.t < 0.0 || *o.t > 1.0) throw UsageError("--t must lie in [0, 1]");
  const auto m = load_model(o.model);
  const auto r = query(m, *o.t);
  write_series(fs::path(o.out), single_field_series(r.field));
  if (!o.quiet) std::printf("t %.6g  %.3f ms  -> %s\n", *o.t, 1e3 * r.seconds, o.out.c_str());
  return 0;
}

int cmd_baseline(const Options& o) {
  const auto s = read_series(fs::path(o.series));
  if (o.t) {
    write_series(fs::path(o.out), single_field_series(linear_baseline(s, *o.t)));
  } else {
    ScalarFieldSeries out = s;
    parallel_for(s.count(), o.threads, [&](int, std::size_t k) { out.fields[k] = linear_baseline(s, s.times[k]); });
    write_series(fs::path(o.out), out);
  }
  if (!o.quiet) std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

int cmd_eval(const Options& o) {
  const auto m = load_model(o.model);
  const auto s = read_series(fs::path(o.series));
  for (std::size_t k = 0; k < s.count(); ++k) {
    if (!s.has_field(k)) throw Error(ErrorCode::MissingGroundTruth, "timestep " + std::to_string(k) + " has no field");
  }
  if (s.shape != m.config.grid) throw Error(ErrorCode::ShapeMismatch, "series grid does not match the model");
  const auto d = diagrams_for(o, s);
  const auto report = evaluate(m, s, d, o.prune_ratio, o.threads);
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    write_eval_csv(out, report);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + o.out);
  }
  std::cout << eval_summary(report);
  return 0;
}

int cmd_export(const Options& o) {
  const auto s = read_series(fs::path(o.series));
  if (o.step >= s.count() || !s.has_field(o.step)) {
    throw UsageError("timestep " + std::to_string(o.step) + " not available");
  }
  export_image(s.fields[o.step], o.out, o.axis, o.slice);
  if (!o.quiet) std::printf("wrote %s\n", o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Time-varying scalar field reconstruction with topological losses"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", o.threads, "Worker threads (1 is deterministic)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", o.quiet, "Only print results");

  auto* gen = app.add_subcommand("gen", "Write a synthetic Gaussian-mixture series");
  gen->add_option("--shape", o.extents, "Grid extents, e.g. 64,64")->delimiter(',')->expected(2, 3);
  gen->add_option("--steps", o.steps, "Number of timesteps")->check(CLI::Range(2, 100000));
  gen->add_option("--keyframes", o.key_fraction, "Fraction of timesteps kept as keyframes")->check(CLI::Range(1e-9, 1.0));
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--scenario", o.scenario, "mixture or moving")->check(CLI::IsMember({"mixture", "moving"}));
  gen->add_flag("--keyframes-only", o.keyframes_only, "Store only keyframe fields");
  gen->add_option("--out", o.out, "Series file (TSF1)")->required();

  auto* diagram = app.add_subcommand("diagram", "Persistence diagrams of every timestep");
  diagram->add_option("--series", o.series, "Series file")->required()->check(CLI::ExistingFile);
  diagram->add_option("--prune", o.prune_ratio, "Drop pairs below this fraction of the largest bar")->check(CLI::Range(0.0, 0.999999));
  diagram->add_option("--out", o.out, "Output directory for dg_%05d.csv")->required();

  auto* distance = app.add_subcommand("distance", "Wasserstein distance between two diagrams");
  distance->add_option("a", o.diagram_a, "First diagram CSV")->required()->check(CLI::ExistingFile);
  distance->add_option("b", o.diagram_b, "Second diagram CSV")->required()->check(CLI::ExistingFile);
  distance->add_option("--q", o.q, "Exponent")->check(CLI::Range(1.0, 1e9));
  distance->add_option("--out", o.out, "Matching CSV (source_idx,target_idx,cost)");

  auto* train_cmd = app.add_subcommand("train", "Train a decoder");
  train_cmd->add_option("--config", o.config, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--series", o.series, "Series with keyframes")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--diagrams", o.diagrams, "Diagram directory (default: computed from the series)")->check(CLI::ExistingDirectory);
  train_cmd->add_option("--log", o.log, "Per-epoch loss CSV");
  train_cmd->add_option("--out", o.out, "Checkpoint file (TTM1)")->required();

  auto* query_cmd = app.add_subcommand("query", "Reconstruct the field at time t");
  query_cmd->add_option("--model", o.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--t", o.t, "Time in [0, 1]")->required();
  query_cmd->add_option("--out", o.out, "Single-field series file")->required();

  auto* eval = app.add_subcommand("eval", "Score a model and the linear baseline");
  eval->add_option("--model", o.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--series", o.series, "Fully populated ground-truth series")->required()->check(CLI::ExistingFile);
  eval->add_option("--diagrams", o.diagrams, "Target diagram directory (default: from the series)")->check(CLI::ExistingDirectory);
  eval->add_option("--prune", o.prune_ratio, "Pruning ratio for NW2")->check(CLI::Range(0.0, 0.999999));
  eval->add_option("--out", o.out, "Per-timestep CSV");

  auto* baseline = app.add_subcommand("baseline", "Linear interpolation between keyframes");
  baseline->add_option("--series", o.series, "Series with keyframes")->required()->check(CLI::ExistingFile);
  baseline->add_option("--t", o.t, "Single time (default: every timestep)");
  baseline->add_option("--out", o.out, "Series file")->required();

  auto* exp = app.add_subcommand("export", "Write one timestep as a PGM image");
  exp->add_option("--series", o.series, "Series file")->required()->check(CLI::ExistingFile);
  exp->add_option("--step", o.step, "Timestep index");
  exp->add_option("--axis", o.axis, "Slice axis for 3D fields (0, 1, 2)");
  exp->add_option("--slice", o.slice, "Slice index for 3D fields");
  exp->add_option("--out", o.out, "PGM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*diagram) return cmd_diagram(o);
    if (*distance) return cmd_distance(o);
    if (*train_cmd) return cmd_train(o);
    if (*query_cmd) return cmd_query(o);
    if (*eval) return cmd_eval(o);
    if (*baseline) return cmd_baseline(o);
    if (*exp) return cmd_export(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}
