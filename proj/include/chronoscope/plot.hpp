#pragma once

#include <string>
#include <vector>

namespace chronoscope {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    /// Draw each series as horizontal steps instead of straight segments.
    bool steps = false;
    int width = 720;
    int height = 360;
};

/// Static SVG line chart. Non-finite points (and non-positive ones on a log
/// axis) are skipped.
std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& options);

/// Static SVG heat map of a rows x cols grid (row 0 at the bottom); values
/// are mapped linearly from their min to max onto a grey ramp.
std::string heatmap_svg(const std::vector<double>& values, std::size_t rows, std::size_t cols,
                        const ChartOptions& options);

/// Comma-separated table with a header row. All columns must be equally long.
std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& columns);

}  // namespace chronoscope
