#pragma once

// Deterministic text output: shortest round-trip number formatting, CSV
// tables and minimal SVG plots.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"

namespace depthflow {

/// Shortest decimal form that parses back to the same double. NaN (used for
/// undefined entries) prints as an empty field.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& add(const std::string& s) {
    rows_.back().push_back(s);
    return *this;
  }
  CsvTable& add(double x) { return add(format_double(x)); }
  CsvTable& add(std::size_t x) { return add(std::to_string(x)); }

  std::size_t size() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) {
      if (r.size() != header_.size()) throw UsageError("csv: row width does not match header");
      line(r);
    }
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw DataError("write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// SVG

namespace svg {

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", x);
  return buf;
}

inline std::string open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string close() { return "</svg>\n"; }

inline std::string text(double x, double y, const std::string& s, int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\">" + s + "</text>\n";
}

/// Blue (-1) to white (0) to red (+1).
inline std::string diverging_color(double v) {
  v = std::clamp(v, -1.0, 1.0);
  int r = 255, g = 255, b = 255;
  if (v >= 0) {
    g = b = static_cast<int>(std::lround(255 * (1 - v)));
  } else {
    r = g = static_cast<int>(std::lround(255 * (1 + v)));
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace svg

/// Heatmap of a square matrix with optional segment outlines given as
/// 0-based [begin, end] row ranges.
inline std::string heatmap_svg(const la::Matrix& m, std::span<const std::pair<std::size_t, std::size_t>> boxes = {},
                               const std::string& title = "") {
  const double cell = std::max(4.0, 400.0 / static_cast<double>(std::max<std::size_t>(1, m.rows())));
  const double margin = 30.0;
  const double size = cell * static_cast<double>(m.rows());
  std::string out = svg::open(size + 2 * margin, size + 2 * margin);
  if (!title.empty()) out += svg::text(margin, 20, title);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out += "<rect x=\"" + svg::num(margin + j * cell) + "\" y=\"" + svg::num(margin + i * cell) +
             "\" width=\"" + svg::num(cell) + "\" height=\"" + svg::num(cell) + "\" fill=\"" +
             svg::diverging_color(m(i, j)) + "\"/>\n";
  for (const auto& [b, e] : boxes) {
    const double x = margin + b * cell;
    const double w = (e - b + 1) * cell;
    out += "<rect x=\"" + svg::num(x) + "\" y=\"" + svg::num(x) + "\" width=\"" + svg::num(w) +
           "\" height=\"" + svg::num(w) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  return out + svg::close();
}

/// Eigenvalue cloud in the complex plane with the unit circle.
inline std::string eigencloud_svg(std::span<const la::Complex> values, const std::string& title = "") {
  double extent = 1.1;
  for (const auto& v : values) extent = std::max(extent, 1.05 * std::abs(v));
  const double half = 200.0;
  const double scale = half / extent;
  const double c = half + 20.0;
  std::string out = svg::open(2 * c, 2 * c);
  if (!title.empty()) out += svg::text(10, 15, title);
  out += "<line x1=\"" + svg::num(c - half) + "\" y1=\"" + svg::num(c) + "\" x2=\"" + svg::num(c + half) +
         "\" y2=\"" + svg::num(c) + "\" stroke=\"#999\"/>\n";
  out += "<line x1=\"" + svg::num(c) + "\" y1=\"" + svg::num(c - half) + "\" x2=\"" + svg::num(c) +
         "\" y2=\"" + svg::num(c + half) + "\" stroke=\"#999\"/>\n";
  out += "<circle cx=\"" + svg::num(c) + "\" cy=\"" + svg::num(c) + "\" r=\"" + svg::num(scale) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& v : values)
    out += "<circle cx=\"" + svg::num(c + scale * v.real()) + "\" cy=\"" + svg::num(c - scale * v.imag()) +
           "\" r=\"2.5\" fill=\"#c03030\" fill-opacity=\"0.6\"/>\n";
  return out + svg::close();
}

struct Series {
  std::string label;
  std::vector<double> y;
};

/// Line plot of series against their index (NaN points are skipped).
inline std::string line_plot_svg(std::span<const Series> series, const std::string& title = "") {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!(lo <= hi)) lo = 0, hi = 1;
  if (hi == lo) hi = lo + 1;
  const double w = 480, h = 300, m = 40;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::string out = svg::open(w + 2 * m, h + 2 * m);
  if (!title.empty()) out += svg::text(m, 20, title);
  out += "<rect x=\"" + svg::num(m) + "\" y=\"" + svg::num(m) + "\" width=\"" + svg::num(w) + "\" height=\"" +
         svg::num(h) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  out += svg::text(4, m + 4, format_double(hi), 10) + svg::text(4, m + h, format_double(lo), 10);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::string pts;
    for (std::size_t i = 0; i < series[k].y.size(); ++i) {
      const double v = series[k].y[i];
      if (!std::isfinite(v)) continue;
      const double x = m + (n > 1 ? w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
      const double y = m + h * (1 - (v - lo) / (hi - lo));
      pts += svg::num(x) + "," + svg::num(y) + " ";
    }
    const char* color = colors[k % 5];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" points=\"" + pts + "\"/>\n";
    out += "<text x=\"" + svg::num(m + w - 80) + "\" y=\"" + svg::num(m + 15 + 14 * k) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" + series[k].label + "</text>\n";
  }
  return out + svg::close();
}

}  // namespace depthflow
