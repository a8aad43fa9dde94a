#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace camdiffuse::tools {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> values;
};

// Minimal deterministic SVG line chart: fixed canvas, shared x axis, one
// polyline per series, min/max ticks. No external plotting process involved.
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<double>& x,
                      const std::vector<Series>& series);

}  // namespace camdiffuse::tools
