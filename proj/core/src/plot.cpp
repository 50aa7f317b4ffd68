#include "ssmctrl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ssmctrl/errors.hpp"

namespace ssmctrl::plot {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                    "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v, double step) {
  char buf[32];
  const int digits = std::max(0, static_cast<int>(-std::floor(std::log10(step))));
  std::snprintf(buf, sizeof(buf), "%.*f", std::min(digits, 6), v);
  return buf;
}

std::string escape(const std::string& s) {
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

double nice_step(double span, int target) {
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0;
  return nice * mag;
}

}  // namespace

std::string render_svg(const Figure& fig) {
  if (fig.width < 200 || fig.height < 150) {
    throw InvalidArgument("render_svg: figure too small");
  }
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : fig.series) {
    if (s.x.size() != s.y.size()) {
      throw InvalidArgument("render_svg: series '" + s.label +
                            "' has mismatched x/y lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  for (double r : fig.reference_lines) {
    y0 = std::min(y0, r);
    y1 = std::max(y1, r);
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double left = 70, right = 20, top = 40, bottom = 55;
  const double pw = fig.width - left - right;
  const double ph = fig.height - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(fig.width) + "\" height=\"" +
         std::to_string(fig.height) + "\" font-family=\"sans-serif\" "
         "font-size=\"12\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(fig.width / 2.0) +
         "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(fig.title) + "</text>\n";

  const double xs = nice_step(x1 - x0, 8), ys = nice_step(y1 - y0, 6);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
    out += "<line x1=\"" + num(sx(t)) + "\" y1=\"" + num(top) + "\" x2=\"" +
           num(sx(t)) + "\" y2=\"" + num(top + ph) +
           "\" stroke=\"#e5e5e5\"/>\n";
    out += "<text x=\"" + num(sx(t)) + "\" y=\"" + num(top + ph + 16) +
           "\" text-anchor=\"middle\">" + tick_label(t, xs) + "</text>\n";
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
    out += "<line x1=\"" + num(left) + "\" y1=\"" + num(sy(t)) + "\" x2=\"" +
           num(left + pw) + "\" y2=\"" + num(sy(t)) +
           "\" stroke=\"#e5e5e5\"/>\n";
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(sy(t) + 4) +
           "\" text-anchor=\"end\">" + tick_label(t, ys) + "</text>\n";
  }
  out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" +
         num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<text x=\"" + num(left + pw / 2) + "\" y=\"" +
         num(fig.height - 12.0) + "\" text-anchor=\"middle\">" +
         escape(fig.x_label) + "</text>\n";
  out += "<text transform=\"translate(16," + num(top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + escape(fig.y_label) +
         "</text>\n";

  for (double r : fig.reference_lines) {
    out += "<line x1=\"" + num(left) + "\" y1=\"" + num(sy(r)) + "\" x2=\"" +
           num(left + pw) + "\" y2=\"" + num(sy(r)) +
           "\" stroke=\"#555\" stroke-dasharray=\"2,3\"/>\n";
  }

  for (std::size_t i = 0; i < fig.series.size(); ++i) {
    const auto& s = fig.series[i];
    const std::string color =
        s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
    std::string pts;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      pts += num(sx(s.x[k])) + "," + num(sy(s.y[k])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.3\"" +
           (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + " points=\"" + pts +
           "\"/>\n";
  }

  if (fig.legend) {
    double ly = top + 14;
    for (std::size_t i = 0; i < fig.series.size(); ++i) {
      const auto& s = fig.series[i];
      if (s.label.empty()) continue;
      const std::string color =
          s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
      out += "<line x1=\"" + num(left + pw - 150) + "\" y1=\"" + num(ly - 4) +
             "\" x2=\"" + num(left + pw - 125) + "\" y2=\"" + num(ly - 4) +
             "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
             (s.dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
      out += "<text x=\"" + num(left + pw - 118) + "\" y=\"" + num(ly) +
             "\">" + escape(s.label) + "</text>\n";
      ly += 16;
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace ssmctrl::plot
