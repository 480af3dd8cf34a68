#pragma once

#include <string>
#include <vector>

namespace ftlab {

/// One method's curve: median line plus an optional shaded band between the
/// low/high percentiles (leave lo/hi empty to skip the band).
struct ChartSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> median;
    std::vector<double> lo;
    std::vector<double> hi;
};

struct ChartPanel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<ChartSeries> series;
    bool log_x = true;  // deployment steps are Fibonacci-spaced
    double y_min = 0.0;
    double y_max = 1.0;
};

/// Renders stacked panels into a static SVG document. Output is a pure
/// function of the inputs, so re-renders are byte-identical.
std::string render_chart(const std::vector<ChartPanel>& panels, int width = 780,
                         int panel_height = 300);

}  // namespace ftlab
