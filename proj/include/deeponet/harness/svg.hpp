#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace deeponet::harness {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 640;
  int height = 400;
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % 8];
}

}  // namespace detail

/// Static line plot. Non-finite points, and non-positive ones on a log axis,
/// break the line rather than being drawn.
inline std::string line_plot(const PlotSpec& p, const std::vector<Series>& series) {
  using detail::fmt;
  const double left = 80, right = 20 + 150, top = 40, bottom = 50;
  const double pw = p.width - left - right, ph = p.height - top - bottom;
  auto ty = [&](double y) { return p.log_y ? std::log10(y) : y; };
  auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!p.log_y || y > 0.0); };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (p.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  }
  if (y1 == y0) y1 = y0 + 1;
  auto sx = [&](double x) { return left + pw * (x - x0) / (x1 - x0); };
  auto sy = [&](double y) { return top + ph * (1.0 - (ty(y) - y0) / (y1 - y0)); };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(p.width) + "\" height=\"" +
                    std::to_string(p.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::escape_xml(p.title) + "</text>\n";
  out += "<rect x=\"" + fmt("%.1f", left) + "\" y=\"" + fmt("%.1f", top) + "\" width=\"" + fmt("%.1f", pw) + "\" height=\"" +
         fmt("%.1f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks: decades on a log axis, five intervals otherwise
  const int ny = p.log_y ? static_cast<int>(y1 - y0) : 5;
  const int ystep = std::max(1, ny / 8);
  for (int i = 0; i <= ny; i += p.log_y ? ystep : 1) {
    const double v = y0 + (y1 - y0) * i / ny;
    const double y = top + ph * (1.0 - static_cast<double>(i) / ny);
    const std::string label = p.log_y ? "1e" + std::to_string(static_cast<int>(std::lround(v))) : fmt("%.3g", v);
    out += "<line x1=\"" + fmt("%.1f", left - 4) + "\" x2=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", y) + "\" y2=\"" +
           fmt("%.1f", y) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", y + 4) + "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double v = x0 + (x1 - x0) * i / 5;
    const double x = sx(v);
    out += "<line x1=\"" + fmt("%.1f", x) + "\" x2=\"" + fmt("%.1f", x) + "\" y1=\"" + fmt("%.1f", top + ph) + "\" y2=\"" +
           fmt("%.1f", top + ph + 4) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", top + ph + 18) + "\" text-anchor=\"middle\">" +
           fmt("%.3g", v) + "</text>\n";
  }
  out += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", p.height - 10.0) + "\" text-anchor=\"middle\">" +
         detail::escape_xml(p.x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + fmt("%.1f", top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
         detail::escape_xml(p.y_label) + "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(k)) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], s.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", sx(s.x[i])) + "," + fmt("%.2f", sy(s.y[i]));
    }
    flush();
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    out += "<line x1=\"" + fmt("%.1f", left + pw + 10) + "\" x2=\"" + fmt("%.1f", left + pw + 30) + "\" y1=\"" + fmt("%.1f", ly) +
           "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" + detail::palette(k) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt("%.1f", left + pw + 34) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" + detail::escape_xml(s.label) +
           "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace deeponet::harness
