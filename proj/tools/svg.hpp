#pragma once

#include <string>
#include <vector>

namespace potlab::cli {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct ChartSpec {
  std::string title, xlabel, ylabel;
  bool logx = false, logy = false;
};

// minimal standalone SVG line chart; non-positive values are dropped on log axes
std::string line_chart(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace potlab::cli
