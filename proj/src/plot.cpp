#include "prgauge/plot.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "prgauge/io.hpp"
#include "prgauge/scores.hpp"

namespace prgauge {

namespace {

constexpr double kPanelWidth = 300.0;
constexpr double kPanelHeight = 260.0;
constexpr double kTop = 40.0;
constexpr double kLeft[2] = {60.0, 440.0};
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
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

std::string to_screen(int panel, double x, double y) {
  return num(kLeft[panel] + x * kPanelWidth) + "," + num(kTop + (1.0 - y) * kPanelHeight);
}

void draw_axes(std::ostringstream& out, int panel, const std::string& title, const std::string& y_label) {
  const double x0 = kLeft[panel], y1 = kTop + kPanelHeight;
  out << "  <g class=\"axes\">\n";
  out << "    <rect x=\"" << num(x0) << "\" y=\"" << num(kTop) << "\" width=\"" << num(kPanelWidth) << "\" height=\""
      << num(kPanelHeight) << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = 0.25 * t;
    const double sx = x0 + v * kPanelWidth, sy = kTop + (1.0 - v) * kPanelHeight;
    out << "    <line x1=\"" << num(sx) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(sx) << "\" y2=\"" << num(y1 + 5)
        << "\" stroke=\"#000000\"/>\n";
    out << "    <text x=\"" << num(sx) << "\" y=\"" << num(y1 + 18) << "\" text-anchor=\"middle\">" << num(v).substr(0, 4)
        << "</text>\n";
    out << "    <line x1=\"" << num(x0 - 5) << "\" y1=\"" << num(sy) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(sy)
        << "\" stroke=\"#000000\"/>\n";
    out << "    <text x=\"" << num(x0 - 8) << "\" y=\"" << num(sy + 4) << "\" text-anchor=\"end\">" << num(v).substr(0, 4)
        << "</text>\n";
  }
  out << "    <text x=\"" << num(x0 + kPanelWidth / 2) << "\" y=\"" << num(kTop - 14)
      << "\" text-anchor=\"middle\" font-weight=\"bold\">" << escape(title) << "</text>\n";
  out << "    <text x=\"" << num(x0 + kPanelWidth / 2) << "\" y=\"" << num(y1 + 36)
      << "\" text-anchor=\"middle\">normalized &#945;</text>\n";
  out << "    <text transform=\"translate(" << num(x0 - 42) << "," << num(kTop + kPanelHeight / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  out << "  </g>\n";
}

}  // namespace

std::vector<Point2> gi_region(const PrCurve& curve) {
  const PcdCurve p = pcd(curve);
  std::vector<Point2> polygon;
  for (double x : p.norm_alphas) polygon.emplace_back(x, x);
  for (std::size_t i = p.norm_alphas.size(); i-- > 0;) polygon.emplace_back(p.norm_alphas[i], p.cumulative[i]);
  return polygon;
}

double polygon_area(std::span<const Point2> polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& [x1, y1] = polygon[i];
    const auto& [x2, y2] = polygon[(i + 1) % polygon.size()];
    twice += x1 * y2 - x2 * y1;
  }
  return std::abs(0.5 * twice);
}

std::string render_curves_svg(std::span<const PrCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("plot: need at least one curve");
  const double legend_height = 18.0 * static_cast<double>(curves.size());
  const double height = kTop + kPanelHeight + 60.0 + legend_height;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"" << num(height) << "\" viewBox=\"0 0 800 "
      << num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"800\" height=\"" << num(height) << "\" fill=\"#ffffff\"/>\n";
  draw_axes(out, 0, "PR curve", "accuracy");
  draw_axes(out, 1, "PCD curve", "cumulative accuracy");

  out << "  <polyline class=\"idealized\" points=\"" << to_screen(1, 0, 0) << " " << to_screen(1, 1, 1)
      << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const PrCurve curve = curves[c].normalized() ? curves[c] : normalize(curves[c]);
    const std::string colour = kPalette[c % std::size(kPalette)];
    const auto region = gi_region(curve);
    const double gi = gi_score(curve);
    out << "  <polygon class=\"gi-region\" data-area=\"" << format_double(polygon_area(region)) << "\" data-gi=\""
        << format_double(gi) << "\" points=\"";
    for (std::size_t i = 0; i < region.size(); ++i) out << (i ? " " : "") << to_screen(1, region[i].first, region[i].second);
    out << "\" fill=\"" << colour << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";

    out << "  <polyline class=\"pr\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      out << (i ? " " : "") << to_screen(0, curve.norm_alphas[i], curve.accuracies[i]);
    }
    out << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";

    const PcdCurve p = pcd(curve);
    out << "  <polyline class=\"pcd\" points=\"";
    for (std::size_t i = 0; i < p.norm_alphas.size(); ++i) {
      out << (i ? " " : "") << to_screen(1, p.norm_alphas[i], p.cumulative[i]);
    }
    out << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";

    const double ly = kTop + kPanelHeight + 56.0 + 18.0 * static_cast<double>(c);
    std::string name = curve.model_id.empty() ? "curve " + std::to_string(c + 1) : curve.model_id;
    name += " / " + curve.spec.label() + " (gi " + num(gi) + ")";
    out << "  <line x1=\"60\" y1=\"" << num(ly - 4) << "\" x2=\"84\" y2=\"" << num(ly - 4) << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    out << "  <text x=\"90\" y=\"" << num(ly) << "\">" << escape(name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace prgauge
