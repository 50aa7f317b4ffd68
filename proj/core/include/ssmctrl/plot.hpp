#pragma once

#include <string>
#include <vector>

namespace ssmctrl::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty selects from the default cycle
  bool dashed = false;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<double> reference_lines;  // horizontal, dotted
  int width = 760;
  int height = 440;
  bool legend = true;
};

// Self-contained SVG line plot with linear axes and "nice" tick spacing.
std::string render_svg(const Figure& fig);

}  // namespace ssmctrl::plot
