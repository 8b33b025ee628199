#pragma once

#include <string>
#include <vector>

namespace fas::io {

// Two-column numeric series persisted as CSV; the CSV is the contract, the
// SVG rendering is cosmetic.
struct Series {
    std::string name;
    std::vector<double> x, y;
};

void write_series_csv(const std::string& path, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

// Simple multi-line chart. One polyline per series, fixed palette, axis
// labels and min/max ticks.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series);

// Scatter variant (used for quality-vs-ASR points).
void write_svg_scatter(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

} // namespace fas::io
