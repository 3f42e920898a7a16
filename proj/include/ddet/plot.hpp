#pragma once

#include <string>
#include <vector>

#include "ddet/eval.hpp"

namespace ddet {

struct PlotSeries {
  std::string name;
  std::vector<PrPoint> points;
};

// Self-contained SVG documents; no external fonts or scripts.
std::string svg_pr_curves(const std::string& title,
                          const std::vector<PlotSeries>& series);

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one per series name
};

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace ddet
