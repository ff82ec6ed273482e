#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace s3d::testing {

// Direct O(n^2) evaluation: bandwidth from every pooled pair, then the three
// unbiased sums.
inline double brute_mmd(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<double> d;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        for (std::size_t j = i + 1; j < pooled.size(); ++j) d.push_back(std::abs(pooled[i] - pooled[j]));
    }
    std::sort(d.begin(), d.end());
    double s = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
    if (s == 0) s = 1;
    auto k = [&](double x, double y) { return std::exp(-(x - y) * (x - y) / (2 * s * s)); };
    double xx = 0, yy = 0, xy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (i != j) xx += k(a[i], a[j]);
        }
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (i != j) yy += k(b[i], b[j]);
        }
    }
    for (double x : a) {
        for (double y : b) xy += k(x, y);
    }
    const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
    return std::max(0.0, xx / (n * (n - 1)) + yy / (m * (m - 1)) - 2 * xy / (n * m));
}

// Cosine cumulative signal retention, offset 0.008, clamped to [1e-5, 1 - 1e-5].
inline double cosine_alpha_bar(int t, int T) {
    const double off = 0.008;
    auto f = [&](double u) {
        const double c = std::cos((u / T + off) / (1 + off) * std::numbers::pi / 2);
        return c * c;
    };
    if (t == 0) return 1.0;
    return std::clamp(f(t) / f(0), 1e-5, 1 - 1e-5);
}

}  // namespace s3d::testing
