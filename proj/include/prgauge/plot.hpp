#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prgauge/prcurve.hpp"

namespace prgauge {

using Point2 = std::pair<double, double>;

/// Region between the idealized PCD (the 45 degree line) and the curve's PCD, in data units:
/// up the diagonal, then back along the PCD.
std::vector<Point2> gi_region(const PrCurve& curve);
/// Shoelace area (absolute value).
double polygon_area(std::span<const Point2> polygon);

/// Two panels: PR curves on the left, PCD curves with the dashed idealized line and the
/// shaded Gi region of each curve on the right. Output carries no timestamp.
std::string render_curves_svg(std::span<const PrCurve> curves);

}  // namespace prgauge
