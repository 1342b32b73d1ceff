#pragma once

#include <string>
#include <utility>
#include <vector>

namespace pie::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Line chart with linear axes fitted to the data.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

/// Histogram of values over [lo, hi] with `bins` equal bins.
std::string histogram(const std::string& title, const std::vector<double>& values, double lo, double hi,
                      std::size_t bins);

/// Accumulates shapes in world metres and renders them top-down.
class Canvas {
 public:
  // World window: x in [x_min, x_max] drawn bottom to top, y in [y_min, y_max] drawn right to left.
  Canvas(double x_min, double x_max, double y_min, double y_max, double px_per_m);

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, const std::string& stroke,
               double opacity = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                bool dashed = false, double opacity = 1.0);
  void circle(double x, double y, double r_px, const std::string& fill);
  void text(double x, double y, const std::string& s, const std::string& fill = "#222");
  void legend(const std::vector<std::pair<std::string, std::string>>& entries);
  std::string render(const std::string& title) const;

 private:
  std::pair<double, double> map(double x, double y) const;

  double x_min_, x_max_, y_min_, y_max_, scale_;
  std::string body_;
};

std::string escape(const std::string& s);

}  // namespace pie::svg
