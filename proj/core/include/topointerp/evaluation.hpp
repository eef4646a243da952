#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "topointerp/config.hpp"
#include "topointerp/field.hpp"
#include "topointerp/io.hpp"
#include "topointerp/network.hpp"
#include "topointerp/persistence.hpp"

namespace topointerp {

/// PSNR in dB with peak 1. Identical fields give +inf.
double psnr(const ScalarField& pred, const ScalarField& truth);

/// Pointwise linear blend of the keyframes bracketing t. Throws
/// InvalidArgument with fewer than two keyframes or t outside [0, 1].
ScalarField linear_baseline(const ScalarFieldSeries& series, double t);

/// A decoder restored from a checkpoint.
struct Model {
  RunConfig config;
  nn::ModelParameters params;
};

/// Throws BadCheckpoint when the config echo or arrays are unusable.
Model load_model(const std::filesystem::path& path);
Model model_from_checkpoint(const Checkpoint& checkpoint);
Checkpoint make_checkpoint(const RunConfig& config, const nn::ModelParameters& params);

struct QueryResult {
  ScalarField field;
  double seconds = 0.0;
};

/// One forward pass with dropout off.
QueryResult query(const Model& model, double t);

/// Predicts the field of timestep k at time t.
using Predictor = std::function<ScalarField(std::size_t k, double t)>;

struct EvalRow {
  std::size_t timestep = 0;
  double time = 0.0;
  bool keyframe = false;
  double psnr_linear = 0.0;
  double psnr_model = 0.0;
  double nw2_linear = 0.0;
  double nw2_model = 0.0;
  double query_seconds = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  // Means over non-keyframe rows.
  double psnr_linear = 0.0;
  double psnr_model = 0.0;
  double nw2_linear = 0.0;
  double nw2_model = 0.0;
  double query_seconds = 0.0;
};

/// Scores a predictor and the linear baseline against a fully populated
/// series. NW_2 compares each prediction's diagram with the stored one, both
/// pruned at `prune_ratio`. Throws MissingGroundTruth when a field is absent.
EvalReport evaluate(const Predictor& predictor, const ScalarFieldSeries& truth,
                    const std::vector<PersistenceDiagram>& diagrams, double prune_ratio = 0.01,
                    int threads = 1);
EvalReport evaluate(const Model& model, const ScalarFieldSeries& truth,
                    const std::vector<PersistenceDiagram>& diagrams, double prune_ratio = 0.01,
                    int threads = 1);

/// NW_2 between pruned diagrams of `field` and `target`.
double topology_error(const ScalarField& field, const PersistenceDiagram& target, double prune_ratio);

void write_eval_csv(std::ostream& out, const EvalReport& report);
std::string eval_summary(const EvalReport& report);

/// Maxima-class pairs whose persistence reaches `fraction` of the largest
/// persistence in the diagram, infinite bars measured with their cropped
/// extent (an InfMax at b counts b, an InfMin at b counts 1 - b).
std::size_t count_maxima_features(const PersistenceDiagram& diagram, double fraction);

}  // namespace topointerp
