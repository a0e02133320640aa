#pragma once

// Minimal static SVG line charts; no plotting dependency.

#include <string>
#include <vector>

namespace corld {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series, bool log_x = false);

}  // namespace corld
