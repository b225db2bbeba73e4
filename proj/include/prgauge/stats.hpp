#pragma once

#include <span>

namespace prgauge {

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);
/// Kendall tau-b rank correlation; 0 when either side is constant.
double kendall_tau(std::span<const double> x, std::span<const double> y);

}  // namespace prgauge
