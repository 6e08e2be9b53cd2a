#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/types.h>

#include "catwm/attacks.hpp"
#include "catwm/metrics.hpp"

namespace catwm {

class WatermarkModel;

enum class GridMode { SingleStep, Compositional };

std::string_view grid_mode_name(GridMode mode);

struct AttackSpec {
  std::string id;
  AttackParams params;

  bool operator==(const AttackSpec&) const = default;
};

struct GridCell {
  std::string label;   // e.g. "rotate(5)" or "jpeg(60)>rotate(10)"
  std::string family;  // Identity/Value/... or Val+Comp/... or Combined
  std::vector<AttackSpec> ops;
};

struct EvalGrid {
  GridMode mode = GridMode::SingleStep;
  std::vector<GridCell> cells;
};

/// Parameter lists per primitive for both modes plus the fixed chain used
/// for the single-step "Combined" cell. Defaults are the image evaluation
/// grids; binaries appear only "on" in the compositional lists.
struct GridConfig {
  std::map<std::string, std::vector<double>> single_step;
  std::map<std::string, std::vector<double>> compositional;
  std::vector<std::pair<std::string, double>> combined_chain;

  static GridConfig defaults();
  static GridConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Enumerate cells in registry order. Compositional mode takes ordered pairs
/// of non-identity primitives, skipping a binary primitive paired with
/// itself. Throws UnknownPrimitive / OutOfRangeParam on bad config.
EvalGrid build_grid(GridMode mode, const GridConfig& config,
                    std::span<const AttackPrimitive> primitives = registry());

Family classify_family(std::string_view id, std::span<const AttackPrimitive> primitives = registry());
/// Unordered family-pair label in Val < Comp < Geom order, e.g. "Comp+Geom".
std::string classify_pair(std::string_view first, std::string_view second,
                          std::span<const AttackPrimitive> primitives = registry());

std::vector<std::string> single_step_family_labels();
std::vector<std::string> pair_family_labels();

struct CellResult {
  std::size_t index = 0;
  std::string label;
  std::string family;
  std::vector<AttackSpec> ops;
  std::int64_t samples = 0;
  DecodeResult decode;
};

struct AggregateRow {
  std::string label;
  double bit_accuracy = 0.0;
  double capacity = 0.0;
  std::int64_t cells = 0;
};

struct EvalReport {
  std::string kind;  // single, compositional, forward, backward
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string checkpoint_id;
  int payload_bits = 0;
  std::vector<CellResult> cells;
  std::vector<AggregateRow> families;
  AggregateRow overall;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  double alpha = 0.2;
  std::int64_t chunk = 128;
  std::string kind;
  std::string config_hash;
  std::string checkpoint_id;
};

/// Embed fresh messages per cell (stream derived from seed and cell index),
/// attack, extract, and fill cell, family and overall statistics.
EvalReport evaluate(WatermarkModel& model, const torch::Tensor& images, const EvalGrid& grid, const EvalOptions& options);

/// Family means over member cells; overall mean over non-identity cells.
void aggregate(EvalReport& report, GridMode mode);

enum class TransferDirection { Forward, Backward, Matched };
TransferDirection transfer_direction(int train_depth, int eval_depth);
std::string_view transfer_name(TransferDirection d);

/// Evaluate a model trained at `train_depth` on the grid for `eval_depth`.
EvalReport transfer_eval(WatermarkModel& model, int train_depth, int eval_depth, const torch::Tensor& images,
                         const GridConfig& config, EvalOptions options);

/// Fixed validation attacks used for training curves: one mid-strength
/// attack per family (depth 1) or their ordered pairs (depth 2).
std::vector<GridCell> validation_cells(int depth);
double validation_bit_error(WatermarkModel& model, const torch::Tensor& images, std::span<const GridCell> cells,
                            double alpha, std::uint64_t seed);

std::string report_to_csv(const EvalReport& report);
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

enum class ReportFormat { Csv, Json, Both };
/// Writes <stem>.csv and/or <stem>.json into dir; returns written paths.
std::vector<std::filesystem::path> export_report(const EvalReport& report, const std::filesystem::path& dir,
                                                 const std::string& stem, ReportFormat format);

torch::Tensor apply_ops(std::span<const AttackSpec> ops, const torch::Tensor& x);

}  // namespace catwm
