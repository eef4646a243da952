#include "topointerp/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "topointerp/error.hpp"
#include "topointerp/parallel.hpp"
#include "topointerp/wasserstein.hpp"

namespace topointerp {

double psnr(const ScalarField& pred, const ScalarField& truth) {
  if (pred.shape != truth.shape || pred.size() != truth.size()) {
    throw Error(ErrorCode::ShapeMismatch, "PSNR needs fields of one shape");
  }
  if (pred.empty()) throw Error(ErrorCode::ShapeMismatch, "PSNR of empty fields");
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const double d = pred.values[j] - truth.values[j];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

ScalarField linear_baseline(const ScalarFieldSeries& series, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, 1]");
  std::vector<std::size_t> keys;
  for (std::size_t k = 0; k < series.count(); ++k) {
    if (series.keyframes[k]) {
      if (!series.has_field(k)) throw Error(ErrorCode::InvalidArgument, "keyframe without a field");
      keys.push_back(k);
    }
  }
  if (keys.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two keyframes");
  for (std::size_t k : keys) {
    if (series.times[k] == t) return series.fields[k];
  }
  // Bracketing pair; times outside the keyframe span extrapolate from the
  // nearest interval.
  std::size_t hi = 1;
  while (hi + 1 < keys.size() && series.times[keys[hi]] < t) ++hi;
  const auto& fa = series.fields[keys[hi - 1]];
  const auto& fb = series.fields[keys[hi]];
  const double ta = series.times[keys[hi - 1]];
  const double tb = series.times[keys[hi]];
  ScalarField out(series.shape);
  const double inv = 1.0 / (tb - ta);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out.values[j] = ((tb - t) * fa.values[j] + (t - ta) * fb.values[j]) * inv;
  }
  return out;
}

Checkpoint make_checkpoint(const RunConfig& config, const nn::ModelParameters& params) {
  return Checkpoint{format_config(config), params};
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
  Model m;
  try {
    m.config = parse_config(checkpoint.config_text);
    nn::check_parameters(m.config.train.arch, checkpoint.params);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadCheckpoint, e.what());
  }
  m.params = checkpoint.params;
  return m;
}

Model load_model(const std::filesystem::path& path) {
  try {
    return model_from_checkpoint(read_checkpoint(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadCheckpoint) throw;
    throw Error(ErrorCode::BadCheckpoint, e.what());
  }
}

QueryResult query(const Model& model, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorCode::InvalidArgument, "t must lie in [0, 1]");
  const auto start = std::chrono::steady_clock::now();
  QueryResult r;
  r.field = nn::forward(model.params, model.config.train.arch, t);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

double topology_error(const ScalarField& field, const PersistenceDiagram& target, double prune_ratio) {
  return normalized_wasserstein(prune(compute_diagram(field), prune_ratio), prune(target, prune_ratio));
}

EvalReport evaluate(const Predictor& predictor, const ScalarFieldSeries& truth,
                    const std::vector<PersistenceDiagram>& diagrams, double prune_ratio, int threads) {
  const std::size_t n = truth.count();
  if (diagrams.size() != n) throw Error(ErrorCode::InvalidArgument, "need one diagram per timestep");
  for (std::size_t k = 0; k < n; ++k) {
    if (!truth.has_field(k)) {
      throw Error(ErrorCode::MissingGroundTruth, "timestep " + std::to_string(k) + " has no field");
    }
  }
  EvalReport report;
  report.rows.resize(n);
  parallel_for(n, std::max(1, threads), [&](int, std::size_t k) {
    auto& row = report.rows[k];
    row.timestep = k;
    row.time = truth.times[k];
    row.keyframe = truth.keyframes[k];
    const auto lin = linear_baseline(truth, row.time);
    const auto start = std::chrono::steady_clock::now();
    const auto pred = predictor(k, row.time);
    row.query_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.psnr_linear = psnr(lin, truth.fields[k]);
    row.psnr_model = psnr(pred, truth.fields[k]);
    row.nw2_linear = topology_error(lin, diagrams[k], prune_ratio);
    row.nw2_model = topology_error(pred, diagrams[k], prune_ratio);
  });
  std::size_t m = 0;
  for (const auto& row : report.rows) {
    if (row.keyframe) continue;
    ++m;
    report.psnr_linear += row.psnr_linear;
    report.psnr_model += row.psnr_model;
    report.nw2_linear += row.nw2_linear;
    report.nw2_model += row.nw2_model;
    report.query_seconds += row.query_seconds;
  }
  if (m > 0) {
    const double inv = 1.0 / static_cast<double>(m);
    report.psnr_linear *= inv;
    report.psnr_model *= inv;
    report.nw2_linear *= inv;
    report.nw2_model *= inv;
    report.query_seconds *= inv;
  }
  return report;
}

EvalReport evaluate(const Model& model, const ScalarFieldSeries& truth,
                    const std::vector<PersistenceDiagram>& diagrams, double prune_ratio, int threads) {
  if (model.config.grid != truth.shape) {
    throw Error(ErrorCode::ShapeMismatch, "model grid differs from the series grid");
  }
  return evaluate([&](std::size_t, double t) { return query(model, t).field; }, truth, diagrams,
                  prune_ratio, threads);
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "timestep,time,keyframe,method,psnr,nw2,query_seconds\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,linear,%.17g,%.17g,0\n", r.timestep, r.time,
                  r.keyframe ? 1 : 0, r.psnr_linear, r.nw2_linear);
    out << buf;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,model,%.17g,%.17g,%.9g\n", r.timestep, r.time,
                  r.keyframe ? 1 : 0, r.psnr_model, r.nw2_model, r.query_seconds);
    out << buf;
  }
}

std::string eval_summary(const EvalReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "non-keyframe means\n"
                "  linear  PSNR %8.3f dB  NW2 %.5f\n"
                "  model   PSNR %8.3f dB  NW2 %.5f  query %.3f ms/frame\n",
                report.psnr_linear, report.nw2_linear, report.psnr_model, report.nw2_model,
                1e3 * report.query_seconds);
  return buf;
}

std::size_t count_maxima_features(const PersistenceDiagram& diagram, double fraction) {
  const WassersteinOptions crop;
  auto extent = [&](const PersistencePair& p) {
    const auto q = plane_point(p, crop);
    return q.death - q.birth;
  };
  double largest = 0.0;
  for (const auto& p : diagram.pairs) largest = std::max(largest, extent(p));
  std::size_t count = 0;
  for (const auto& p : diagram.pairs) {
    if (is_maximum_class(p.kind) && extent(p) >= fraction * largest && extent(p) > 0.0) ++count;
  }
  return count;
}

}  // namespace topointerp
