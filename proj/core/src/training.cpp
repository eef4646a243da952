#include "topointerp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <limits>
#include <string>

#include "topointerp/error.hpp"
#include "topointerp/parallel.hpp"

namespace topointerp {

namespace {

void require_same_shape(const ScalarField& a, const ScalarField& b) {
  if (a.shape != b.shape || a.size() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction and reference fields differ in shape");
  }
}

}  // namespace

double smooth_l1(double x, double y) {
  const double d = std::abs(x - y);
  return d < 1.0 ? 0.5 * d * d : d - 0.5;
}

FieldLoss loss_mse(const ScalarField& pred, const ScalarField& key) {
  require_same_shape(pred, key);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  FieldLoss out;
  out.gradient.resize(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const double d = pred.values[j] - key.values[j];
    out.value += d * d;
    out.gradient[j] = 2.0 * d * inv_n;
  }
  out.value *= inv_n;
  return out;
}

FieldLoss loss_grad(const ScalarField& pred, const ScalarField& key) {
  require_same_shape(pred, key);
  const auto gp = discrete_gradient(pred);
  const auto gk = discrete_gradient(key);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  FieldLoss out;
  std::vector<double> dgrad(gp.size());
  for (std::size_t i = 0; i < gp.size(); ++i) {
    const double d = gp[i] - gk[i];
    out.value += smooth_l1(gp[i], gk[i]);
    dgrad[i] = (std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0)) * inv_n;
  }
  out.value *= inv_n;
  out.gradient = discrete_gradient_adjoint(pred.shape, dgrad);
  return out;
}

namespace {

FieldLoss critical_value_loss(const ScalarField& pred,
                              const std::vector<std::pair<VertexId, double>>& points) {
  FieldLoss out;
  out.gradient.assign(pred.size(), 0.0);
  if (points.empty()) return out;
  const double inv = 1.0 / static_cast<double>(points.size());
  for (const auto& [v, value] : points) {
    if (v < 0 || v >= static_cast<VertexId>(pred.size())) {
      throw Error(ErrorCode::ShapeMismatch, "critical vertex outside the predicted grid");
    }
    const double d = pred[v] - value;
    out.value += d * d * inv;
    out.gradient[static_cast<std::size_t>(v)] += 2.0 * d * inv;
  }
  return out;
}

void require_vertex_ids(const PersistenceDiagram& d) {
  for (const auto& p : d.pairs) {
    if (p.birth_vertex == kNoVertex || (!p.infinite() && p.death_vertex == kNoVertex)) {
      throw Error(ErrorCode::MissingVertexIds, "target diagram pair lacks vertex identifiers");
    }
  }
}

}  // namespace

FieldLoss loss_cv(const ScalarField& pred, const PersistenceDiagram& target) {
  require_vertex_ids(target);
  return critical_value_loss(pred, critical_points(target));
}

void TrainConfig::validate() const {
  arch.validate();
  if (!(lr > 0.0) || (lr_phase2 && !(*lr_phase2 > 0.0))) {
    throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  }
  if (!(lr_floor > 0.0 && lr_floor <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lr_floor must lie in (0, 1]");
  if (n1 < 0 || n2 < 0) throw Error(ErrorCode::InvalidArgument, "epoch counts must be non-negative");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight decay must be >= 0");
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "prune ratio must lie in [0, 1)");
  }
}

AdamState make_adam_state(const nn::ModelParameters& params) {
  AdamState s;
  for (const auto& a : params.arrays) {
    s.first.emplace_back(a.size(), 0.0);
    s.second.emplace_back(a.size(), 0.0);
  }
  return s;
}

void adam_step(nn::ModelParameters& params, const nn::ParameterGradients& grads, AdamState& state,
               const AdamOptions& options, double lr, double weight_decay) {
  if (grads.size() != params.arrays.size() || state.first.size() != params.arrays.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    auto& arr = params.arrays[a];
    if (arr.frozen) continue;
    auto& m = state.first[a];
    auto& v = state.second[a];
    const auto& g = grads[a];
    for (std::size_t i = 0; i < arr.data.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double step = (m[i] / c1) / (std::sqrt(v[i] / c2) + options.epsilon);
      arr.data[i] -= lr * (step + weight_decay * arr.data[i]);
    }
  }
}

std::size_t TrainingProblem::keyframe_count() const {
  return static_cast<std::size_t>(std::count_if(keyframes.begin(), keyframes.end(),
                                                 [](const auto& k) { return k.has_value(); }));
}

TrainingProblem make_problem(const ScalarFieldSeries& series,
                             const std::vector<PersistenceDiagram>& diagrams, double prune_ratio,
                             bool prune_cv_targets) {
  const std::size_t n = series.count();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "training needs at least two timesteps");
  if (diagrams.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "need one target diagram per timestep");
  }
  if (series.keyframes.size() != n || series.times.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "series keyframe flags/times do not match its length");
  }
  TrainingProblem p;
  p.shape = series.shape;
  p.times = series.times;
  p.keyframes.resize(n);
  p.targets.reserve(n);
  p.critical.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (series.keyframes[k]) {
      if (!series.has_field(k)) {
        throw Error(ErrorCode::InvalidArgument, "keyframe " + std::to_string(k) + " has no field");
      }
      if (series.fields[k].shape != series.shape) {
        throw Error(ErrorCode::ShapeMismatch, "keyframe field shape differs from series shape");
      }
      p.keyframes[k] = series.fields[k];
    }
    require_vertex_ids(diagrams[k]);
    auto pruned = prune(diagrams[k], prune_ratio);
    p.critical.push_back(critical_points(prune_cv_targets ? pruned : diagrams[k]));
    p.targets.push_back(std::move(pruned));
  }
  if (p.keyframe_count() == 0) throw Error(ErrorCode::InvalidArgument, "series has no keyframes");
  return p;
}

namespace {

struct WorkerAccumulator {
  nn::ParameterGradients grads;
  LossTerms sums;
  nn::ForwardTape tape;
};

}  // namespace

ObjectiveResult evaluate_objective(const nn::ModelParameters& params, const nn::ArchConfig& arch,
                                   const TrainingProblem& problem, const ObjectiveOptions& options,
                                   bool with_gradients) {
  const std::size_t n = problem.count();
  if (arch.output_shape() != problem.shape) {
    throw Error(ErrorCode::ShapeMismatch, "architecture output does not match the series grid");
  }
  const auto& w = options.weights;
  const bool topo = w.gamma > 0.0;
  if (options.frozen_matchings != nullptr && options.frozen_matchings->size() != n) {
    throw Error(ErrorCode::InvalidArgument, "frozen matchings need one list per timestep");
  }
  const double inv_keys = 1.0 / static_cast<double>(problem.keyframe_count());
  const double inv_steps = 1.0 / static_cast<double>(n);

  const int workers = std::max(1, std::min<int>(options.threads, static_cast<int>(n)));
  std::vector<WorkerAccumulator> acc(static_cast<std::size_t>(workers));
  for (auto& a : acc) {
    if (with_gradients) a.grads = nn::zero_gradients(params);
  }
  ObjectiveResult result;
  if (topo) result.matchings.resize(n);

  parallel_for(n, workers, [&](int worker, std::size_t k) {
    auto& a = acc[static_cast<std::size_t>(worker)];
    std::optional<nn::DropoutSpec> drop = options.dropout;
    if (drop) drop->timestep = k;
    const auto pred = nn::forward(params, arch, problem.times[k], with_gradients ? &a.tape : nullptr, drop);
    std::vector<double> out_grad(pred.size(), 0.0);
    auto accumulate = [&](const FieldLoss& l, double scale) {
      for (std::size_t j = 0; j < out_grad.size(); ++j) out_grad[j] += scale * l.gradient[j];
    };
    if (problem.keyframes[k]) {
      const auto& key = *problem.keyframes[k];
      if (options.include_mse) {
        const auto l = loss_mse(pred, key);
        a.sums.mse += l.value * inv_keys;
        accumulate(l, inv_keys);
      }
      if (w.alpha > 0.0) {
        const auto l = loss_grad(pred, key);
        a.sums.grad += l.value * inv_keys;
        accumulate(l, w.alpha * inv_keys);
      }
    }
    if (w.beta > 0.0) {
      const auto l = critical_value_loss(pred, problem.critical[k]);
      a.sums.cv += l.value * inv_steps;
      accumulate(l, w.beta * inv_steps);
    }
    if (topo) {
      std::vector<AnchoredPoint> anchors;
      if (options.frozen_matchings != nullptr) {
        anchors = (*options.frozen_matchings)[k];
      } else {
        const auto current = compute_diagram(pred);
        const auto mask = prune_mask(current, options.prune_ratio);
        const auto matching = match_diagrams(current, problem.targets[k], {}, mask);
        anchors = anchor_matching(current, problem.targets[k], matching);
      }
      const double value = anchored_w2(pred, anchors, {}, &out_grad, w.gamma * inv_steps);
      a.sums.w2 += value * inv_steps;
      result.matchings[k] = std::move(anchors);
    }
    if (with_gradients) nn::backward(params, a.tape, out_grad, a.grads);
  });

  LossTerms& t = result.terms;
  for (const auto& a : acc) {
    t.mse += a.sums.mse;
    t.grad += a.sums.grad;
    t.cv += a.sums.cv;
    t.w2 += a.sums.w2;
  }
  if (!topo) t.w2 = std::numeric_limits<double>::quiet_NaN();
  t.total = (options.include_mse ? t.mse : 0.0) + w.alpha * t.grad + w.beta * t.cv +
            (topo ? w.gamma * t.w2 : 0.0);
  if (with_gradients) {
    result.gradients = std::move(acc.front().grads);
    for (std::size_t i = 1; i < acc.size(); ++i) {
      for (std::size_t arr = 0; arr < result.gradients.size(); ++arr) {
        auto& dst = result.gradients[arr];
        const auto& src = acc[i].grads[arr];
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }
  return result;
}

void run_phase(TrainState& state, const TrainingProblem& problem, const TrainConfig& cfg, int phase,
               int epochs, const EpochCallback& on_epoch) {
  const LossWeights& weights = phase == 1 ? cfg.phase1 : cfg.phase2;
  const double base_lr = phase == 2 ? cfg.lr_phase2.value_or(cfg.lr) : cfg.lr;
  state.phase = phase;
  if (phase == 2) {
    const auto names = cfg.freeze_in_phase2.empty() ? nn::phase_two_frozen_arrays(cfg.arch)
                                                    : cfg.freeze_in_phase2;
    for (const auto& name : names) {
      auto* arr = state.params.find(name);
      if (arr == nullptr) throw Error(ErrorCode::InvalidArgument, "cannot freeze unknown array " + name);
      arr->frozen = true;
    }
    if (cfg.reset_adam_in_phase2) state.adam = make_adam_state(state.params);
  }
  ObjectiveOptions opts;
  opts.weights = weights;
  opts.include_mse = phase == 1 || cfg.mse_in_phase2;
  opts.prune_ratio = cfg.prune_ratio;
  opts.threads = cfg.threads;
  const auto start = std::chrono::steady_clock::now();
  for (int e = 0; e < epochs; ++e) {
    if (cfg.arch.dropout_p > 0.0) {
      opts.dropout = nn::DropoutSpec{cfg.arch.dropout_p, cfg.seed, static_cast<std::uint64_t>(state.epoch), 0};
    }
    auto r = evaluate_objective(state.params, cfg.arch, problem, opts, true);
    if (!std::isfinite(r.terms.total)) {
      throw Error(ErrorCode::DivergedLoss, "non-finite loss at epoch " + std::to_string(state.epoch + 1));
    }
    double lr = base_lr;
    if (cfg.lr_cosine && epochs > 1) {
      const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * e / (epochs - 1)));
      lr = base_lr * (cfg.lr_floor + (1.0 - cfg.lr_floor) * c);
    }
    adam_step(state.params, r.gradients, state.adam, cfg.adam, lr, cfg.weight_decay);
    ++state.epoch;
    EpochRecord rec;
    rec.epoch = state.epoch;
    rec.phase = phase;
    rec.terms = r.terms;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.history.push_back(rec);
    if (on_epoch) on_epoch(rec, state);
  }
}

TrainState train(const ScalarFieldSeries& series, const std::vector<PersistenceDiagram>& diagrams,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.arch.output_shape() != series.shape) {
    throw Error(ErrorCode::ShapeMismatch, "architecture output does not match the series grid");
  }
  const auto problem = make_problem(series, diagrams, cfg.prune_ratio, cfg.prune_cv_targets);
  TrainState state;
  state.params = nn::init_parameters(cfg.arch, cfg.seed);
  state.adam = make_adam_state(state.params);
  run_phase(state, problem, cfg, 1, cfg.n1, on_epoch);
  if (cfg.n2 > 0) run_phase(state, problem, cfg, 2, cfg.n2, on_epoch);
  return state;
}

}  // namespace topointerp
