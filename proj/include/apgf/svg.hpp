#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "apgf/graph.hpp"
#include "apgf/oracle.hpp"

namespace apgf::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

namespace detail {

inline std::string escape(const std::string& s) {
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

inline std::string fixed(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << v;
  return o.str();
}

inline std::string tick(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

// Exact values of a series, space-separated, so that the plotted data can be
// read back from the document.
inline std::string data_values(const std::vector<double>& ys) {
  std::string out;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (i) out += ' ';
    out += format_double(ys[i]);
  }
  return out;
}

struct Frame {
  double width = 720, height = 420;
  double left = 70, right = 20, top = 40, bottom = 55;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double py(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

inline void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
}

inline void axes(std::ostringstream& out, const Frame& f, const std::string& title,
                 const std::string& x_label, const std::string& y_label) {
  out << "<rect x=\"0\" y=\"0\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << f.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">"
      << escape(title) << "</text>\n";
  out << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
      << f.width - f.right << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
      << f.height - f.bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    const double xv = f.x_min + (f.x_max - f.x_min) * i / 4.0;
    out << "<text x=\"" << f.left - 6 << "\" y=\"" << fixed(f.py(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick(yv) << "</text>\n";
    out << "<text x=\"" << fixed(f.px(xv)) << "\" y=\"" << f.height - f.bottom + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(xv) << "</text>\n";
  }
  out << "<text x=\"" << f.width / 2 << "\" y=\"" << f.height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << f.height / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << f.height / 2 << ")\">" << escape(y_label) << "</text>\n";
}

inline void legend(std::ostringstream& out, const Frame& f,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
  double y = f.top + 4;
  for (const auto& [name, color] : entries) {
    out << "<rect x=\"" << f.width - f.right - 150 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
        << color << "\"/>\n";
    out << "<text x=\"" << f.width - f.right - 132 << "\" y=\"" << y + 10 << "\" font-size=\"12\">"
        << escape(name) << "</text>\n";
    y += 18;
  }
}

}  // namespace detail

// Line chart of one or more series sharing the axes.
inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series) {
  detail::Frame f;
  f.x_min = f.y_min = INFINITY;
  f.x_max = f.y_max = -INFINITY;
  for (const auto& s : series) {
    for (double x : s.x) f.x_min = std::min(f.x_min, x), f.x_max = std::max(f.x_max, x);
    for (double y : s.y) f.y_min = std::min(f.y_min, y), f.y_max = std::max(f.y_max, y);
  }
  if (!std::isfinite(f.x_min)) f.x_min = 0, f.x_max = 1, f.y_min = 0, f.y_max = 1;
  if (!(f.x_max > f.x_min)) f.x_max = f.x_min + 1;
  detail::pad_range(f.y_min, f.y_max);

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
      << f.height << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n";
  detail::axes(out, f, title, x_label, y_label);
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& s : series) {
    out << "<polyline class=\"series\" data-name=\"" << detail::escape(s.name) << "\" data-values=\""
        << detail::data_values(s.y) << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.y.size() && i < s.x.size(); ++i)
      out << (i ? " " : "") << detail::fixed(f.px(s.x[i])) << ',' << detail::fixed(f.py(s.y[i]));
    out << "\"/>\n";
    entries.emplace_back(s.name, s.color);
  }
  detail::legend(out, f, entries);
  out << "</svg>\n";
  return out.str();
}

// Per-node bars for the oracle score with the model score drawn as a line on
// top.
inline std::string comparison_chart(const ComparisonReport& report, const std::string& title) {
  detail::Frame f;
  const std::size_t n = report.rows.size();
  f.x_min = -0.5;
  f.x_max = static_cast<double>(n == 0 ? 1 : n) - 0.5;
  f.y_min = 0.0;
  f.y_max = 0.0;
  std::vector<double> oracle, model;
  for (const auto& row : report.rows) {
    oracle.push_back(row.oracle_score);
    model.push_back(row.model_score);
    f.y_max = std::max({f.y_max, row.oracle_score, row.model_score});
    f.y_min = std::min({f.y_min, row.oracle_score, row.model_score});
  }
  if (!(f.y_max > f.y_min)) f.y_max = f.y_min + 1.0;
  f.y_max *= 1.08;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
      << f.height << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n";
  detail::axes(out, f, title, "node", "attack path score");
  const double bar = 0.7 * (f.px(1.0) - f.px(0.0));
  out << "<g class=\"series\" data-name=\"oracle_score\" data-values=\"" << detail::data_values(oracle)
      << "\" fill=\"#9ecae1\">\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = f.px(static_cast<double>(i)) - bar / 2;
    const double y = f.py(oracle[i]);
    out << "  <rect x=\"" << detail::fixed(x) << "\" y=\"" << detail::fixed(y) << "\" width=\""
        << detail::fixed(bar) << "\" height=\"" << detail::fixed(f.py(f.y_min) - y) << "\"/>\n";
  }
  out << "</g>\n";
  out << "<polyline class=\"series\" data-name=\"model_score\" data-values=\""
      << detail::data_values(model) << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < n; ++i)
    out << (i ? " " : "") << detail::fixed(f.px(static_cast<double>(i))) << ','
        << detail::fixed(f.py(model[i]));
  out << "\"/>\n";
  detail::legend(out, f, {{"oracle (brute force)", "#9ecae1"}, {"model (greedy)", "#d62728"}});
  out << "</svg>\n";
  return out.str();
}

}  // namespace apgf::svg
