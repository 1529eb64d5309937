#pragma once

#include <string>
#include <vector>

namespace icl {

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
    bool dashed = false;
};

struct PlotSpec {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<PlotSeries> series;
    std::vector<std::string> notes;  // printed under the legend
};

// Log-log line plot; non-positive values are skipped.
std::string render_loglog_svg(const PlotSpec& spec);
void write_svg(const std::string& path, const PlotSpec& spec);

}  // namespace icl
