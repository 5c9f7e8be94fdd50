#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "edualloc/rng.hpp"

namespace edualloc {

// Beta(beta1, beta2) law of relative ability. Draws go through the inverse
// CDF so the stream depends only on the uniform source.
struct AbilityDist {
    double beta1 = 28.82;
    double beta2 = 28.78;

    void validate() const {
        if (!(beta1 > 0.0) || !(beta2 > 0.0))
            throw std::invalid_argument("AbilityDist: shapes must be positive");
    }

    double mean() const { return beta1 / (beta1 + beta2); }

    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        if (x >= 1.0) return 1.0;
        return boost::math::ibeta(beta1, beta2, x);
    }

    double quantile(double p) const {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
        if (p == 0.0) return 0.0;
        if (p == 1.0) return 1.0;
        return boost::math::ibeta_inv(beta1, beta2, p);
    }

    double sample(Rng& rng) const {
        double u = 0.0;
        do {
            u = rng.uniform01();
        } while (u <= 0.0);
        return quantile(u);
    }
};

// Assumption-1 sampler: abilities sum to one exactly and their joint law does
// not depend on gender or birth order. For n=3 the i.i.d. draws are
// normalized by their sum (the constraint has no canonical construction in
// the source model; normalization is used throughout, including estimation).
inline std::vector<double> sample_ability_vector(int n_children, const AbilityDist& dist, Rng& rng) {
    dist.validate();
    if (n_children == 2) {
        const double a1 = dist.sample(rng);
        return {a1, 1.0 - a1};
    }
    if (n_children == 3) {
        double draws[3];
        double sum = 0.0;
        for (double& d : draws) {
            d = dist.sample(rng);
            sum += d;
        }
        return {draws[0] / sum, draws[1] / sum, 1.0 - draws[0] / sum - draws[1] / sum};
    }
    throw std::invalid_argument("sample_ability_vector: supported family sizes are 2 and 3");
}

namespace detail {

inline double beta_loglik(const std::vector<double>& x, double b1, double b2) {
    double slx = 0.0, sl1x = 0.0;
    for (double v : x) {
        slx += std::log(v);
        sl1x += std::log1p(-v);
    }
    const double n = static_cast<double>(x.size());
    const double lbeta = std::lgamma(b1) + std::lgamma(b2) - std::lgamma(b1 + b2);
    return (b1 - 1.0) * slx + (b2 - 1.0) * sl1x - n * lbeta;
}

} // namespace detail

// Maximum likelihood fit of Beta shapes: method-of-moments start, then Newton
// on the digamma score with step halving to stay in the positive orthant.
inline AbilityDist fit_beta_mle(const std::vector<double>& samples) {
    if (samples.size() < 30)
        throw std::invalid_argument("fit_beta_mle: need at least 30 samples, got " +
                                    std::to_string(samples.size()));
    double mean = 0.0;
    for (double v : samples) {
        if (!(v > 0.0 && v < 1.0))
            throw std::invalid_argument(
                "fit_beta_mle: samples must lie strictly inside (0,1); clip boundary values first");
        mean += v;
    }
    const double n = static_cast<double>(samples.size());
    mean /= n;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= n;

    double b1 = 1.0, b2 = 1.0;
    if (var > 0.0) {
        const double t = mean * (1.0 - mean) / var - 1.0;
        if (t > 0.0) {
            b1 = mean * t;
            b2 = (1.0 - mean) * t;
        }
    }
    const double ll0 = detail::beta_loglik(samples, b1, b2);

    double slx = 0.0, sl1x = 0.0;
    for (double v : samples) {
        slx += std::log(v);
        sl1x += std::log1p(-v);
    }
    const double mlx = slx / n, ml1x = sl1x / n;

    bool converged = false;
    for (int iter = 0; iter < 500; ++iter) {
        using boost::math::digamma;
        using boost::math::trigamma;
        const double psi_sum = digamma(b1 + b2);
        const double g1 = mlx - digamma(b1) + psi_sum;
        const double g2 = ml1x - digamma(b2) + psi_sum;
        if (std::abs(g1) < 1e-12 && std::abs(g2) < 1e-12) {
            converged = true;
            break;
        }
        const double tsum = trigamma(b1 + b2);
        const double h11 = -trigamma(b1) + tsum;
        const double h22 = -trigamma(b2) + tsum;
        const double h12 = tsum;
        const double det = h11 * h22 - h12 * h12;
        if (det == 0.0) break;
        double d1 = -(h22 * g1 - h12 * g2) / det;
        double d2 = -(-h12 * g1 + h11 * g2) / det;
        double step = 1.0;
        while (b1 + step * d1 <= 0.0 || b2 + step * d2 <= 0.0) step *= 0.5;
        b1 += step * d1;
        b2 += step * d2;
    }
    if (!converged) {
        using boost::math::digamma;
        const double g1 = mlx - digamma(b1) + digamma(b1 + b2);
        const double g2 = ml1x - digamma(b2) + digamma(b1 + b2);
        if (std::abs(g1) > 1e-8 || std::abs(g2) > 1e-8)
            throw std::runtime_error("fit_beta_mle: no convergence after 500 iterations; last iterate (" +
                                     std::to_string(b1) + ", " + std::to_string(b2) + ")");
    }
    AbilityDist out{b1, b2};
    if (detail::beta_loglik(samples, b1, b2) < ll0 - 1e-9)
        throw std::runtime_error("fit_beta_mle: log-likelihood decreased from the moment start");
    return out;
}

} // namespace edualloc
