#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

// Empirical-CDF utilities shared by the counterfactual engines and the test
// suites: KS distance, one-sided dominance gap, and a symmetry deviation that
// uses the midpoint convention so point masses cancel.

namespace edualloc {

struct GapDistribution {
    std::string scenario;
    std::vector<double> samples;  // kept sorted ascending

    void finalize() { std::sort(samples.begin(), samples.end()); }

    std::size_t size() const { return samples.size(); }

    double mean() const {
        double s = 0.0;
        for (double v : samples) s += v;
        return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
    }

    // right-continuous ECDF
    double cdf(double x) const {
        const auto it = std::upper_bound(samples.begin(), samples.end(), x);
        return static_cast<double>(it - samples.begin()) / static_cast<double>(samples.size());
    }

    // left limit F(x-)
    double cdf_left(double x) const {
        const auto it = std::lower_bound(samples.begin(), samples.end(), x);
        return static_cast<double>(it - samples.begin()) / static_cast<double>(samples.size());
    }

    double cdf_mid(double x) const { return 0.5 * (cdf(x) + cdf_left(x)); }
};

// sup_x |F1(x) - F2(x)|, evaluated over both samples' jump points.
inline double ks_distance(const GapDistribution& d1, const GapDistribution& d2) {
    if (d1.samples.empty() || d2.samples.empty()) throw std::invalid_argument("ks_distance: empty sample");
    double d = 0.0;
    for (const auto* src : {&d1, &d2})
        for (double x : src->samples) {
            d = std::max(d, std::abs(d1.cdf(x) - d2.cdf(x)));
            d = std::max(d, std::abs(d1.cdf_left(x) - d2.cdf_left(x)));
        }
    return d;
}

// max_x (F_a(x) - F_b(x)): <= tol everywhere means a first-order dominates b.
inline double fosd_gap(const GapDistribution& a, const GapDistribution& b) {
    if (a.samples.empty() || b.samples.empty()) throw std::invalid_argument("fosd_gap: empty sample");
    double d = -1.0;
    for (const auto* src : {&a, &b})
        for (double x : src->samples) d = std::max(d, a.cdf(x) - b.cdf(x));
    return d;
}

// sup_x |F(x) + F(-x) - 1| with midpoint ECDFs; zero for a distribution
// symmetric about the origin, atoms included.
inline double symmetry_deviation(const GapDistribution& d) {
    if (d.samples.empty()) throw std::invalid_argument("symmetry_deviation: empty sample");
    double dev = 0.0;
    for (double x : d.samples) dev = std::max(dev, std::abs(d.cdf_mid(x) + d.cdf_mid(-x) - 1.0));
    return dev;
}

// One-sample KS statistic against a continuous CDF.
template <typename Cdf>
double ks_statistic_one_sample(std::vector<double> samples, Cdf&& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_statistic_one_sample: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = cdf(samples[i]);
        d = std::max(d, std::max(static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n));
    }
    return d;
}

// Asymptotic one-sample KS critical value at significance alpha.
inline double ks_critical_value(std::size_t n, double alpha) {
    if (n == 0 || !(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ks_critical_value: bad input");
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

} // namespace edualloc
