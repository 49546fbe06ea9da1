#pragma once

#include <string>
#include <vector>

#include "advbench/eval.hpp"

namespace advbench {

enum class PlotMetric { accuracy, asr };

/// Standalone SVG with one polyline per curve and a legend in input order.
/// Curves share the y range [0,1]; the x range spans all abscissae.
std::string plot_curves(const std::vector<RobustnessCurve>& curves, PlotMetric metric = PlotMetric::accuracy,
                        const std::string& title = "");

}  // namespace advbench
