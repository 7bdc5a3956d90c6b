#pragma once

// Telemetry summaries and SVG reward charts.

#include <string>
#include <vector>

#include "adlab/telemetry.hpp"

namespace adlab::cli {

struct RunCurve {
  std::string name;  // telemetry file stem
  std::vector<StepStats> stats;
};

inline constexpr std::size_t kReportWindow = 50;

// Per run: first/last window means, rising flags and windowed clip fractions.
std::string report_summary_json(const std::vector<RunCurve>& runs, std::size_t window = kReportWindow);

// Overall reward (solid) and format reward (dashed) per run that has reward
// columns.
std::string render_reward_svg(const std::vector<RunCurve>& runs);

}  // namespace adlab::cli
