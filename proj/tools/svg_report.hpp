#pragma once

#include <string>
#include <vector>

namespace carbonfl::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal self-contained SVG line chart (axes, ticks, legend).
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series);

/// Row-major heatmap with a blue-to-red ramp and per-row labels.
std::string heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels,
                    const std::vector<std::vector<double>>& values);

void write_file(const std::string& path, const std::string& svg);

}  // namespace carbonfl::svg
