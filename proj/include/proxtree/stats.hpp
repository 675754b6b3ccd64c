#pragma once

#include <span>
#include <string>
#include <vector>

namespace proxtree {

double mean(std::span<const double> values);

// Population variance (divides by n).
double variance(std::span<const double> values);

double median(std::vector<double> values);

// Empirical quantile with linear interpolation between order statistics
// (the "type 7" definition): h = (n - 1) p, result interpolates
// x[floor(h)] and x[floor(h) + 1].
double quantile(std::vector<double> values, double p);
double quantile_sorted(std::span<const double> sorted, double p);

// Shortest text that parses back to the identical double.
std::string format_double(double value);

}  // namespace proxtree
