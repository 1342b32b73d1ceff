#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace pie::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string out = header(W, H);
  out += "<text x=\"" + num(W / 2 - R / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
         "</text>\n";
  out += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"#444\"/>\n";
  out += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    out += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" + tick(yv) + "</text>\n";
    out += "<line x1=\"" + num(L) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(py(yv)) +
           "\" stroke=\"#eee\"/>\n";
    out += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(H - B + 16) + "\" text-anchor=\"middle\">" + tick(xv) +
           "</text>\n";
  }
  out += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\">" +
         escape(x_label) + "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : series[i].points)
      if (std::isfinite(y)) pts += num(px(x)) + "," + num(py(y)) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    const double ly = T + 18.0 * double(i);
    out += "<line x1=\"" + num(W - R + 12) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 32) + "\" y2=\"" +
           num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"3\"/>\n";
    out += "<text x=\"" + num(W - R + 38) + "\" y=\"" + num(ly + 4) + "\">" + escape(series[i].label) + "</text>\n";
  }
  return out + "</svg>\n";
}

std::string histogram(const std::string& title, const std::vector<double>& values, double lo, double hi,
                      std::size_t bins) {
  const double W = 520, H = 360, L = 50, R = 20, T = 40, B = 50;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * double(bins)));
    counts[std::size_t(std::clamp<std::ptrdiff_t>(b, 0, std::ptrdiff_t(bins) - 1))]++;
  }
  const double peak = double(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const double bw = (W - L - R) / double(bins);
  std::string out = header(W, H);
  out += "<text x=\"" + num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  for (std::size_t i = 0; i < bins; ++i) {
    const double h = double(counts[i]) / peak * (H - T - B);
    out += "<rect x=\"" + num(L + bw * double(i) + 1) + "\" y=\"" + num(H - B - h) + "\" width=\"" + num(bw - 2) +
           "\" height=\"" + num(h) + "\" fill=\"#4c78a8\"/>\n";
    if (counts[i])
      out += "<text x=\"" + num(L + bw * (double(i) + 0.5)) + "\" y=\"" + num(H - B - h - 4) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + std::to_string(counts[i]) + "</text>\n";
  }
  for (std::size_t i = 0; i <= bins; i += std::max<std::size_t>(1, bins / 5)) {
    out += "<text x=\"" + num(L + bw * double(i)) + "\" y=\"" + num(H - B + 16) + "\" text-anchor=\"middle\">" +
           tick(lo + (hi - lo) * double(i) / double(bins)) + "</text>\n";
  }
  out += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) +
         "\" stroke=\"#444\"/>\n";
  out += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\">n = " +
         std::to_string(values.size()) + "</text>\n";
  return out + "</svg>\n";
}

Canvas::Canvas(double x_min, double x_max, double y_min, double y_max, double px_per_m)
    : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max), scale_(px_per_m) {}

std::pair<double, double> Canvas::map(double x, double y) const {
  return {(y_max_ - y) * scale_, (x_max_ - x) * scale_ + 30.0};
}

void Canvas::polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
                     const std::string& stroke, double opacity) {
  std::string p;
  for (auto [x, y] : pts) {
    auto [u, v] = map(x, y);
    p += num(u) + "," + num(v) + " ";
  }
  body_ += "<polygon points=\"" + p + "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\" fill-opacity=\"" +
           num(opacity) + "\"/>\n";
}

void Canvas::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                      bool dashed, double opacity) {
  std::string p;
  for (auto [x, y] : pts) {
    auto [u, v] = map(x, y);
    p += num(u) + "," + num(v) + " ";
  }
  body_ += "<polyline points=\"" + p + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
           "\" stroke-opacity=\"" + num(opacity) + "\"" + (dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
}

void Canvas::circle(double x, double y, double r_px, const std::string& fill) {
  auto [u, v] = map(x, y);
  body_ += "<circle cx=\"" + num(u) + "\" cy=\"" + num(v) + "\" r=\"" + num(r_px) + "\" fill=\"" + fill + "\"/>\n";
}

void Canvas::text(double x, double y, const std::string& s, const std::string& fill) {
  auto [u, v] = map(x, y);
  body_ += "<text x=\"" + num(u) + "\" y=\"" + num(v) + "\" fill=\"" + fill + "\">" + escape(s) + "</text>\n";
}

void Canvas::legend(const std::vector<std::pair<std::string, std::string>>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double y = 48.0 + 16.0 * double(i);
    body_ += "<rect x=\"8\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"10\" fill=\"" + entries[i].second +
             "\"/>\n<text x=\"26\" y=\"" + num(y) + "\">" + escape(entries[i].first) + "</text>\n";
  }
}

std::string Canvas::render(const std::string& title) const {
  const double w = (y_max_ - y_min_) * scale_, h = (x_max_ - x_min_) * scale_ + 30.0;
  return header(w, h) + "<text x=\"8\" y=\"20\" font-size=\"14\">" + escape(title) + "</text>\n" + body_ + "</svg>\n";
}

}  // namespace pie::svg
