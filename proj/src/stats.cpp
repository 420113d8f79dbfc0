#include "affectdyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace affectdyn {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
    const auto n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = static_cast<double>(n - 1) * p;
    const auto lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0, 1]");
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

MedianIqr median_iqr(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median_iqr: empty sample");
    std::sort(values.begin(), values.end());
    MedianIqr out;
    out.q1 = quantile_sorted(values, 0.25);
    out.median = quantile_sorted(values, 0.50);
    out.q3 = quantile_sorted(values, 0.75);
    return out;
}

} // namespace affectdyn
