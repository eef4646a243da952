#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "topointerp/field.hpp"
#include "topointerp/network.hpp"
#include "topointerp/persistence.hpp"
#include "topointerp/topo_grad.hpp"

namespace topointerp {

struct LossWeights {
  double alpha = 0.1;  // gradient fitting
  double beta = 1.0;   // critical values
  double gamma = 0.0;  // Wasserstein topology correction

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

inline constexpr LossWeights kPhaseOneWeights{0.1, 1.0, 0.0};
inline constexpr LossWeights kPhaseTwoWeights{0.0, 1.0, 1.0};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  nn::ArchConfig arch;
  double lr = 1e-3;
  /// Phase-2 learning rate; unset means lr.
  std::optional<double> lr_phase2;
  /// Cosine decay within each phase from its learning rate down to
  /// lr_floor times that rate; off keeps the rate constant.
  bool lr_cosine = false;
  double lr_floor = 0.05;
  double weight_decay = 1e-6;
  int n1 = 400;
  int n2 = 40;
  double prune_ratio = 0.01;
  std::uint64_t seed = 0;
  int threads = 1;
  LossWeights phase1 = kPhaseOneWeights;
  LossWeights phase2 = kPhaseTwoWeights;
  bool mse_in_phase2 = true;
  bool prune_cv_targets = true;
  /// Restart Adam moments when phase 2 begins. The phase-1 second moments
  /// are scaled to the phase-1 loss and misjudge the new gradients.
  bool reset_adam_in_phase2 = true;
  /// Arrays frozen for phase 2; empty means nn::phase_two_frozen_arrays(arch).
  std::vector<std::string> freeze_in_phase2;
  AdamOptions adam;

  void validate() const;
};

/// A loss value and its gradient with respect to the predicted field.
struct FieldLoss {
  double value = 0.0;
  std::vector<double> gradient;
};

/// (1/n_v) sum (pred - key)^2.
FieldLoss loss_mse(const ScalarField& pred, const ScalarField& key);

/// (1/n_v) sum over vertices and axes of smooth-L1 between discrete gradients.
FieldLoss loss_grad(const ScalarField& pred, const ScalarField& key);

/// Mean squared error at the critical vertices of `target`. Throws
/// MissingVertexIds when the diagram lacks vertex identifiers.
FieldLoss loss_cv(const ScalarField& pred, const PersistenceDiagram& target);

double smooth_l1(double x, double y);

struct LossTerms {
  double mse = 0.0;
  double grad = 0.0;
  double cv = 0.0;
  double w2 = 0.0;  // NaN when not evaluated
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  int phase = 1;
  LossTerms terms;
  double wall_seconds = 0.0;
};

struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::int64_t step = 0;
};

AdamState make_adam_state(const nn::ModelParameters& params);

/// One Adam update with decoupled weight decay. Frozen arrays are untouched.
void adam_step(nn::ModelParameters& params, const nn::ParameterGradients& grads, AdamState& state,
               const AdamOptions& options, double lr, double weight_decay);

struct TrainState {
  nn::ModelParameters params;
  AdamState adam;
  int epoch = 0;
  int phase = 1;
  std::vector<EpochRecord> history;
};

/// Fixed inputs of the objective: keyframe fields, per-timestep target
/// diagrams (pruned for the topological term) and critical points.
struct TrainingProblem {
  GridShape shape;
  std::vector<double> times;
  std::vector<std::optional<ScalarField>> keyframes;
  std::vector<PersistenceDiagram> targets;
  std::vector<std::vector<std::pair<VertexId, double>>> critical;

  [[nodiscard]] std::size_t count() const { return times.size(); }
  [[nodiscard]] std::size_t keyframe_count() const;
};

/// Throws InvalidArgument/ShapeMismatch on inconsistent inputs. Only
/// keyframe fields of `series` are read.
TrainingProblem make_problem(const ScalarFieldSeries& series,
                             const std::vector<PersistenceDiagram>& diagrams, double prune_ratio,
                             bool prune_cv_targets);

struct ObjectiveOptions {
  LossWeights weights = kPhaseOneWeights;
  bool include_mse = true;
  double prune_ratio = 0.01;
  int threads = 1;
  std::optional<nn::DropoutSpec> dropout;  // timestep filled per forward
  /// When set, the topological term uses these matchings instead of fresh
  /// diagrams (one list per timestep).
  const std::vector<std::vector<AnchoredPoint>>* frozen_matchings = nullptr;
};

struct ObjectiveResult {
  LossTerms terms;
  nn::ParameterGradients gradients;  // empty unless requested
  std::vector<std::vector<AnchoredPoint>> matchings;  // per timestep, when gamma > 0
};

/// L = L_MSE + alpha L_grad + beta L_CV + gamma L_W2 over all timesteps.
ObjectiveResult evaluate_objective(const nn::ModelParameters& params, const nn::ArchConfig& arch,
                                   const TrainingProblem& problem, const ObjectiveOptions& options,
                                   bool with_gradients);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Two-phase training: n1 epochs of scalar-field fitting, then n2 epochs of
/// topology correction with the early layers frozen. Throws DivergedLoss on
/// a non-finite loss.
TrainState train(const ScalarFieldSeries& series, const std::vector<PersistenceDiagram>& diagrams,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues training from `state` for the given number of epochs in `phase`.
void run_phase(TrainState& state, const TrainingProblem& problem, const TrainConfig& cfg, int phase,
               int epochs, const EpochCallback& on_epoch = {});

}  // namespace topointerp
