#include "core/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "core/common.hpp"

namespace corld {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kLeft = 64, kRight = 150, kTop = 40, kBottom = 52;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series, bool log_x) {
  if (series.empty()) fail_invalid("eval", "svg chart needs at least one series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const SvgSeries& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      fail_invalid("eval", "svg series '" + s.label + "' is empty or ragged");
    for (size_t i = 0; i < s.x.size(); ++i) {
      double xv = log_x ? std::log10(s.x[i]) : s.x[i];
      xmin = std::min(xmin, xv);
      xmax = std::max(xmax, xv);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) {
    double xv = log_x ? std::log10(x) : x;
    return kLeft + (xv - xmin) / (xmax - xmin) * plot_w;
  };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  std::ofstream os(path);
  if (!os) fail("eval", "cannot open " + path + " for writing");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
        "font-family=\"sans-serif\">"
     << title << "</text>\n";

  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";

  const int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    double fy = ymin + (ymax - ymin) * t / kTicks;
    double yy = py(fy);
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << num(yy) << "\" x2=\"" << kLeft
       << "\" y2=\"" << num(yy) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(yy + 4)
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(fy)
       << "</text>\n";
    double fxv = xmin + (xmax - xmin) * t / kTicks;
    double fx = log_x ? std::pow(10.0, fxv) : fxv;
    double xx = kLeft + (fxv - xmin) / (xmax - xmin) * plot_w;
    os << "<line x1=\"" << num(xx) << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << num(xx)
       << "\" y2=\"" << kTop + plot_h + 4 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(xx) << "\" y=\"" << kTop + plot_h + 18
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << num(fx)
       << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + plot_h / 2
     << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 16 "
     << kTop + plot_h / 2 << ")\">" << y_label << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) os << " ";
      os << num(px(series[s].x[i])) << "," << num(py(series[s].y[i]));
    }
    os << "\"/>\n";
    for (size_t i = 0; i < series[s].x.size(); ++i)
      os << "<circle cx=\"" << num(px(series[s].x[i])) << "\" cy=\"" << num(py(series[s].y[i]))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    double ly = kTop + 16.0 * static_cast<double>(s);
    os << "<line x1=\"" << kLeft + plot_w + 10 << "\" y1=\"" << num(ly + 4) << "\" x2=\""
       << kLeft + plot_w + 30 << "\" y2=\"" << num(ly + 4) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + plot_w + 34 << "\" y=\"" << num(ly + 8)
       << "\" font-size=\"11\" font-family=\"sans-serif\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace corld
