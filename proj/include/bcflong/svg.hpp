#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/csv.hpp"

namespace bcflong {

// Self-contained SVG scatter/line plots so runs have no plotting dependency.
// Raw plot data is always written separately; these files are for eyeballs.

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color;
  bool line = true;
  bool points = false;
};

struct PlotBand {  // shaded region between lo and hi, e.g. credible band
  std::vector<double> x, lo, hi;
  std::string color;
  double opacity = 0.22;
};

struct PlotVSegments {  // vertical error bars / caterpillar whiskers
  std::vector<double> x, lo, hi;
  std::string color;
};

namespace detail {

inline const char* palette(std::size_t k) {
  static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return c[k % 8];
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string num2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline double nice_step(double span, int target) {
  if (span <= 0.0) return 1.0;
  double raw = span / target;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double nice = frac < 1.5 ? 1.0 : frac < 3.5 ? 2.0 : frac < 7.5 ? 5.0 : 10.0;
  return nice * mag;
}

struct AxisScale {
  double lo, hi, step;
};

inline AxisScale axis_scale(double lo, double hi) {
  if (!(hi > lo)) {
    double pad = std::max(1.0, std::abs(lo) * 0.1);
    lo -= pad;
    hi += pad;
  }
  double span = hi - lo;
  lo -= 0.04 * span;
  hi += 0.04 * span;
  return AxisScale{lo, hi, nice_step(hi - lo, 6)};
}

}  // namespace detail

struct Plot {
  std::string title, xlabel, ylabel;
  std::vector<PlotBand> bands;
  std::vector<PlotSeries> series;
  std::vector<PlotVSegments> vsegments;
  int width = 760, height = 480;

  std::string render() const {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool seen = false;
    auto eat = [&](double x, double y) {
      if (!std::isfinite(x) || !std::isfinite(y)) return;
      if (!seen) {
        xmin = xmax = x;
        ymin = ymax = y;
        seen = true;
        return;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    };
    for (const auto& s : series)
      for (std::size_t i = 0; i < s.x.size(); ++i) eat(s.x[i], s.y[i]);
    for (const auto& b : bands)
      for (std::size_t i = 0; i < b.x.size(); ++i) {
        eat(b.x[i], b.lo[i]);
        eat(b.x[i], b.hi[i]);
      }
    for (const auto& v : vsegments)
      for (std::size_t i = 0; i < v.x.size(); ++i) {
        eat(v.x[i], v.lo[i]);
        eat(v.x[i], v.hi[i]);
      }
    require(seen, "plot has no finite data");

    auto xs = detail::axis_scale(xmin, xmax);
    auto ys = detail::axis_scale(ymin, ymax);
    const double ml = 64, mr = 18, mt = 38, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - xs.lo) / (xs.hi - xs.lo) * pw; };
    auto py = [&](double y) { return mt + (ys.hi - y) / (ys.hi - ys.lo) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
           std::to_string(width) + " " + std::to_string(height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";

    double x0 = std::ceil(xs.lo / xs.step) * xs.step;
    for (double v = x0; v <= xs.hi + 1e-9 * xs.step; v += xs.step) {
      double X = px(v);
      out += "<line x1=\"" + detail::num2(X) + "\" y1=\"" + detail::num2(mt) + "\" x2=\"" +
             detail::num2(X) + "\" y2=\"" + detail::num2(mt + ph) +
             "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + detail::num2(X) + "\" y=\"" + detail::num2(mt + ph + 16) +
             "\" text-anchor=\"middle\">" + detail::tick_label(v) + "</text>\n";
    }
    double y0 = std::ceil(ys.lo / ys.step) * ys.step;
    for (double v = y0; v <= ys.hi + 1e-9 * ys.step; v += ys.step) {
      double Y = py(v);
      out += "<line x1=\"" + detail::num2(ml) + "\" y1=\"" + detail::num2(Y) + "\" x2=\"" +
             detail::num2(ml + pw) + "\" y2=\"" + detail::num2(Y) +
             "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + detail::num2(ml - 6) + "\" y=\"" + detail::num2(Y + 4) +
             "\" text-anchor=\"end\">" + detail::tick_label(v) + "</text>\n";
    }

    for (const auto& b : bands) {
      if (b.x.size() < 2) continue;
      std::string pts;
      for (std::size_t i = 0; i < b.x.size(); ++i)
        pts += detail::num2(px(b.x[i])) + "," + detail::num2(py(b.hi[i])) + " ";
      for (std::size_t i = b.x.size(); i-- > 0;)
        pts += detail::num2(px(b.x[i])) + "," + detail::num2(py(b.lo[i])) + " ";
      out += "<polygon points=\"" + pts + "\" fill=\"" + b.color + "\" fill-opacity=\"" +
             detail::num2(b.opacity) + "\" stroke=\"none\"/>\n";
    }

    for (const auto& v : vsegments)
      for (std::size_t i = 0; i < v.x.size(); ++i) {
        double X = px(v.x[i]);
        out += "<line x1=\"" + detail::num2(X) + "\" y1=\"" + detail::num2(py(v.lo[i])) +
               "\" x2=\"" + detail::num2(X) + "\" y2=\"" + detail::num2(py(v.hi[i])) +
               "\" stroke=\"" + v.color + "\" stroke-width=\"1\"/>\n";
      }

    for (const auto& s : series) {
      if (s.line && s.x.size() >= 2) {
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
          pts += detail::num2(px(s.x[i])) + "," + detail::num2(py(s.y[i])) + " ";
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.6\"/>\n";
      }
      if (s.points || s.x.size() < 2)
        for (std::size_t i = 0; i < s.x.size(); ++i)
          out += "<circle cx=\"" + detail::num2(px(s.x[i])) + "\" cy=\"" +
                 detail::num2(py(s.y[i])) + "\" r=\"2.6\" fill=\"" + s.color + "\"/>\n";
    }

    out += "<line x1=\"" + detail::num2(ml) + "\" y1=\"" + detail::num2(mt + ph) + "\" x2=\"" +
           detail::num2(ml + pw) + "\" y2=\"" + detail::num2(mt + ph) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"" + detail::num2(ml) + "\" y1=\"" + detail::num2(mt) + "\" x2=\"" +
           detail::num2(ml) + "\" y2=\"" + detail::num2(mt + ph) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    if (!title.empty())
      out += "<text x=\"" + detail::num2(ml + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" "
             "font-size=\"14\">" + detail::xml_escape(title) + "</text>\n";
    if (!xlabel.empty())
      out += "<text x=\"" + detail::num2(ml + pw / 2) + "\" y=\"" +
             detail::num2(height - 12.0) + "\" text-anchor=\"middle\">" +
             detail::xml_escape(xlabel) + "</text>\n";
    if (!ylabel.empty())
      out += "<text x=\"16\" y=\"" + detail::num2(mt + ph / 2) +
             "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
             detail::num2(mt + ph / 2) + ")\">" + detail::xml_escape(ylabel) + "</text>\n";

    double ly = mt + 14;
    for (const auto& s : series) {
      if (s.label.empty()) continue;
      out += "<line x1=\"" + detail::num2(ml + pw - 120) + "\" y1=\"" + detail::num2(ly - 4) +
             "\" x2=\"" + detail::num2(ml + pw - 100) + "\" y2=\"" + detail::num2(ly - 4) +
             "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
      out += "<text x=\"" + detail::num2(ml + pw - 94) + "\" y=\"" + detail::num2(ly) + "\">" +
             detail::xml_escape(s.label) + "</text>\n";
      ly += 16;
    }

    out += "</g>\n</svg>\n";
    return out;
  }
};

inline void write_plot(const std::string& path, const Plot& p) {
  write_text_file(path, p.render());
}

inline std::string default_color(std::size_t k) { return detail::palette(k); }

}  // namespace bcflong
