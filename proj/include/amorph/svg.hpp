#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace amorph::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> lower, upper;  // optional shaded band, same length as x
};

struct LinePlot {
  std::string title, x_label, y_label;
  std::vector<Series> series;
};

/// Static line chart with axes, ticks and a legend.
void write_line_plot(const std::filesystem::path& path, const LinePlot& plot);

/// n x m grid of cells shaded from white (0) to dark blue (max(1, largest value)),
/// each annotated with its value.
void write_heatmap(const std::filesystem::path& path, const std::string& title, std::size_t rows, std::size_t cols,
                   const std::vector<double>& values);

}  // namespace amorph::svg
