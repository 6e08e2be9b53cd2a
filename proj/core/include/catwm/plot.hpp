#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "catwm/evalharness.hpp"

namespace catwm {

/// Line chart written as PNG. Non-finite points are skipped.
void plot_series(const std::filesystem::path& png, const std::string& title, const std::vector<double>& x,
                 const std::vector<double>& y);

/// Vertical bar chart written as PNG.
void plot_bars(const std::filesystem::path& png, const std::string& title, const std::vector<std::string>& labels,
               const std::vector<double>& values);

/// One PNG per logged metric (lr, alpha, L_msg, L_perc, entropy,
/// val_bit_error) from a training log CSV. Returns the written files.
std::vector<std::filesystem::path> plot_training_log(const std::filesystem::path& csv, const std::filesystem::path& out_dir);

/// Per-family bit accuracy and capacity bar charts for a report.
std::vector<std::filesystem::path> plot_report(const EvalReport& report, const std::filesystem::path& out_dir,
                                               const std::string& stem);

}  // namespace catwm
