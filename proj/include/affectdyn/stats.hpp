#pragma once

#include <vector>

namespace affectdyn {

struct MedianIqr {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

// Quantile by linear interpolation between order statistics ("type 7"):
// h = (n-1)*p, result = x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)]).
// Input need not be sorted. Throws std::invalid_argument on empty input or
// p outside [0, 1].
double quantile(std::vector<double> values, double p);

// Median and quartiles of a non-empty sample, all via the same rule.
MedianIqr median_iqr(std::vector<double> values);

} // namespace affectdyn
