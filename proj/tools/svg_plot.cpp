#include "svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "camdiffuse/error.hpp"

namespace camdiffuse::tools {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<double>& x,
                      const std::vector<Series>& series) {
  if (x.empty() || series.empty()) {
    raise(Errc::InvalidArgument, "nothing to plot");
  }
  for (const Series& s : series) {
    if (s.values.size() != x.size()) {
      raise(Errc::InvalidArgument, "series '" + s.label + "' length mismatch");
    }
  }

  double x_min = x.front(), x_max = x.front();
  for (double v : x) {
    x_min = std::min(x_min, v);
    x_max = std::max(x_max, v);
  }
  double y_min = series.front().values.front();
  double y_max = y_min;
  for (const Series& s : series) {
    for (double v : s.values) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const auto sx = [&](double v) { return kLeft + (v - x_min) / (x_max - x_min) * plot_w; };
  const auto sy = [&](double v) { return kTop + (y_max - v) / (y_max - y_min) * plot_h; };

  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot write '" + path.string() + "'");

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

  // Axes.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";

  // Min/max ticks.
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(y_min) << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"10\">" << fmt(y_min, "%.3f") << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(y_max) << "\" text-anchor=\"end\" "
      << "font-family=\"sans-serif\" font-size=\"10\">" << fmt(y_max, "%.3f") << "</text>\n";
  out << "<text x=\"" << sx(x_min) << "\" y=\"" << kTop + plot_h + 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
      << fmt(x_min, "%.3g") << "</text>\n";
  out << "<text x=\"" << sx(x_max) << "\" y=\"" << kTop + plot_h + 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
      << fmt(x_max, "%.3g") << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill=\"none\" stroke=\"" << series[s].color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      out << fmt(sx(x[i])) << "," << fmt(sy(series[s].values[i]));
      if (i + 1 < x.size()) out << " ";
    }
    out << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(s);
    out << "<rect x=\"" << kLeft + plot_w - 110 << "\" y=\"" << ly - 8
        << "\" width=\"10\" height=\"3\" fill=\"" << series[s].color << "\"/>\n";
    out << "<text x=\"" << kLeft + plot_w - 94 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[s].label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace camdiffuse::tools
