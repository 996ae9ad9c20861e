#pragma once

// Numerical building blocks shared by every module: standard normal
// functions, compensated summation, Gauss-Legendre rules and the
// one-sample Kolmogorov-Smirnov test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "corrdiff/error.hpp"

namespace corrdiff::math {

inline constexpr double inv_sqrt_2pi = 0.39894228040143267793994605993438;

inline double normal_pdf(double x) noexcept {
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(x), accurate far into the tail.
inline double normal_sf(double x) noexcept {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

/// Two-sided tail probability Pr(|Z| > x) for x >= 0.
inline double normal_two_sided(double x) noexcept {
    return std::erfc(std::abs(x) / std::numbers::sqrt2);
}

/// Lower quantile: Phi^{-1}(p).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile: probability must lie in (0, 1)");
    }
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Upper quantile z_alpha with Pr(Z > z_alpha) = alpha.
inline double normal_upper_quantile(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw DomainError("normal_upper_quantile: level must lie in (0, 1)");
    }
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * alpha);
}

/// Neumaier-compensated accumulator. Summation order is the caller's
/// iteration order, so a fixed order gives bit-identical results.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
    CompensatedSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw ValidationError("mean of an empty sequence");
    return compensated_sum(xs) / static_cast<double>(xs.size());
}

/// Sample variance with denominator (n - 1).
inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) throw ValidationError("sample variance needs at least two values");
    const double mu = mean(xs);
    CompensatedSum acc;
    for (double x : xs) acc.add((x - mu) * (x - mu));
    return acc.value() / static_cast<double>(xs.size() - 1);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ValidationError("pearson: sequences must have equal length >= 2");
    }
    const double ma = mean(a);
    const double mb = mean(b);
    CompensatedSum sab, saa, sbb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab.add((a[i] - ma) * (b[i] - mb));
        saa.add((a[i] - ma) * (a[i] - ma));
        sbb.add((b[i] - mb) * (b[i] - mb));
    }
    const double den = std::sqrt(saa.value() * sbb.value());
    if (den == 0.0) throw DegenerateError("pearson: constant sequence");
    return sab.value() / den;
}

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1] with `order` nodes (Newton iteration on
/// the Legendre recurrence). Rules are cached per order.
inline const QuadratureRule& gauss_legendre(std::size_t order) {
    static std::mutex mutex;
    static std::map<std::size_t, QuadratureRule> cache;
    std::scoped_lock lock(mutex);
    if (auto it = cache.find(order); it != cache.end()) return it->second;

    QuadratureRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const std::size_t half = (order + 1) / 2;
    const double n = static_cast<double>(order);
    for (std::size_t i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (std::size_t k = 1; k <= order; ++k) {
                const double p2 = p1;
                p1 = p0;
                const double kd = static_cast<double>(k);
                p0 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p2) / kd;
            }
            dp = n * (x * p0 - p1) / (x * x - 1.0);
            const double step = p0 / dp;
            x -= step;
            if (std::abs(step) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[order - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = w;
        rule.weights[order - 1 - i] = w;
    }
    return cache.emplace(order, std::move(rule)).first->second;
}

/// Survival function of the Kolmogorov distribution, Pr(K > lambda).
inline double kolmogorov_sf(double lambda) noexcept {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.2) return 1.0;
    CompensatedSum acc;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        acc.add(term);
        if (std::abs(term) < 1e-18) break;
        sign = -sign;
    }
    return std::clamp(2.0 * acc.value(), 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample two-sided KS test of `sample` against Uniform(0, 1), using
/// the asymptotic Kolmogorov law with Stephens' finite-n correction.
inline KsResult ks_uniform(std::span<const double> sample) {
    if (sample.empty()) throw ValidationError("ks_uniform: empty sample");
    std::vector<double> xs(sample.begin(), sample.end());
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = std::clamp(xs[i], 0.0, 1.0);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
        d = std::max(d, f - static_cast<double>(i) / n);
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

} // namespace corrdiff::math
