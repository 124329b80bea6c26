#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedal/metrics.h"
#include "pedal/simulator.h"

namespace pedal {

/// Correlations that are undefined serialize as null.
nlohmann::ordered_json to_json(const EvalStats& stats);
EvalStats eval_stats_from_json(const nlohmann::json& j);

/// Column headers of the prequential table.
inline const std::vector<std::string> kPrequentialHeader{"Samples", "MAE", "MSE", "Spearman ρ", "Pearson r",
                                                         "Kendall τ"};

/// Writes curve.csv, checkpoints.csv, prequential.csv, report.json and
/// snapshot.json into dir.
void write_run_outputs(const RunReport& report, const std::filesystem::path& dir);

/// Writes comparison.csv, prequential.csv, seeds.csv, curve_<label>.csv per
/// policy and report.json into dir.
void write_comparison_outputs(const ComparisonReport& report, const std::filesystem::path& dir);

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<CurvePoint> points;
};

/// Standard colors: estimator yellow, random green, oracle red.
std::string policy_color(PolicyKind kind);

/// Quality against percent post-edited as a standalone SVG document.
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title);

/// Plots every curve found in a run or comparison directory to
/// quality_vs_effort.svg under out_dir and returns the file path.
std::filesystem::path plot_run_directory(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace pedal
