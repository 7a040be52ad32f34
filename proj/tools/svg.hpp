#pragma once

#include "mscal/data.hpp"

#include <string>
#include <vector>

namespace mscal::cli {

struct CalibrationPlot {
    std::string title;
    std::vector<CalPoint> estimate; // sorted by predicted
    bool scatter = false;           // points instead of a polyline
    std::vector<CalPoint> reference; // optional true curve
    std::vector<double> rug;         // predicted values, any order
};

/// Square plot with axes, the diagonal, the estimate, an optional reference
/// and rug ticks along the x axis.
std::string render_svg(const CalibrationPlot& plot);

}  // namespace mscal::cli
