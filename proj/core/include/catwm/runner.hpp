#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "catwm/config.hpp"
#include "catwm/evalharness.hpp"
#include "catwm/training.hpp"

namespace catwm {

/// Output root: $CATWM_OUTPUT_ROOT when set, else `fallback`.
std::filesystem::path output_root(const std::filesystem::path& fallback);

/// Default run directory name, e.g. "cat_d2_s7_1a2b3c4d".
std::string run_name(const RunConfig& config);

struct RunSummary {
  std::filesystem::path dir;
  std::filesystem::path checkpoint;
  std::string config_hash;
  std::vector<TrainLogRow> log;
  double seconds = 0.0;
};

/// Ingest data, train, and write log.csv, checkpoints/ and manifest.json
/// into `dir`. With resume, continues from the newest checkpoint.
RunSummary run_training(const RunConfig& config, const std::filesystem::path& dir, bool resume = false,
                        const std::function<void(const TrainLogRow&)>& on_log = {});

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::string mode = "single";  // single, compositional, forward, backward
  std::optional<std::filesystem::path> data_dir;
  bool ood = false;                // synthetic OOD source instead of the test split
  std::uint64_t seed = 0;
  std::int64_t max_images = 0;     // 0 = all
  double alpha = -1.0;             // < 0: the schedule's final alpha
};

/// Evaluate a checkpoint on the requested grid.
EvalReport run_eval(const EvalRequest& request);

/// Path of the newest checkpoint under a run directory (or the path itself
/// when it already is a checkpoint).
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

}  // namespace catwm
