#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "topointerp/field.hpp"
#include "topointerp/training.hpp"

namespace topointerp {

/// Training run settings read from "key = value" text. Keys: dims, extents,
/// T, r0, channels, hidden, lr, lr_schedule (constant or cosine), lr_floor,
/// weight_decay, n1, n2, alpha, beta, gamma, prune_ratio, dropout_p, seed,
/// threads, mse_in_phase2, prune_cv_targets.
/// lr and alpha/beta/gamma take "phase1, phase2"; a single value sets both.
/// Lists accept commas or spaces.
struct RunConfig {
  GridShape grid;
  TrainConfig train;
};

/// Throws BadConfig on unknown keys, bad values or a grid the architecture
/// cannot produce.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Inverse of parse_config; doubles print in shortest round-trip form.
std::string format_config(const RunConfig& config);

}  // namespace topointerp
