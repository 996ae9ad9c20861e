#pragma once

// Power lower bounds for the three tests, truncated moments of d under the
// alternative, the gamma prior on delta and integrated-power threshold
// selection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "corrdiff/error.hpp"
#include "corrdiff/math.hpp"
#include "corrdiff/null_dist.hpp"
#include "corrdiff/test_stats.hpp"

namespace corrdiff {

inline constexpr double eta_floor = 1e-300;

/// Exceedance probability, conditional mean and conditional variance of
/// (|X| - u w)^2 given |X| > u, X ~ N(d, 1).
struct H1Moments {
    double eta = 1.0;
    double mean = 0.0;
    double variance = 0.0;
    bool eta_clamped = false;
};

namespace detail {

/// phi(mu) / Phi(mu), stable for very negative mu.
inline double lower_mills(double mu) {
    if (mu > -30.0) return math::normal_pdf(mu) / math::normal_cdf(mu);
    const double a = -mu;
    const double a2 = a * a;
    return a + 1.0 / a - 2.0 / (a * a2) + 10.0 / (a * a2 * a2);
}

/// E[Y^2], E[Y^4] for Y = Z + c, Z ~ N(mu, 1) conditioned on Z > 0.
struct SideMoments {
    double weight;
    double e2;
    double e4;
};

inline SideMoments side_moments(double mu, double c) {
    // Normalized partial moments m_k = E[Z^k | Z > 0].
    const double m1 = mu + lower_mills(mu);
    const double m2 = mu * m1 + 1.0;
    const double m3 = mu * m2 + 2.0 * m1;
    const double m4 = mu * m3 + 3.0 * m2;
    const double c2 = c * c;
    return {math::normal_cdf(mu), m2 + 2.0 * c * m1 + c2,
            m4 + 4.0 * c * m3 + 6.0 * c2 * m2 + 4.0 * c2 * c * m1 + c2 * c2};
}

} // namespace detail

inline H1Moments h1_truncated_moments(double d, double u, int w) {
    ExceedanceConfig{u, w}.validate();
    if (!std::isfinite(d)) throw DomainError("h1_truncated_moments: d must be finite");
    // |X| > u splits into X - u > 0 and -X - u > 0; shift back by c = u(1 - w).
    const double c = u * (1.0 - w);
    const auto plus = detail::side_moments(d - u, c);
    const auto minus = detail::side_moments(-d - u, c);
    H1Moments out;
    const double eta = plus.weight + minus.weight;
    double e2 = 0.0, e4 = 0.0;
    if (eta > eta_floor) {
        e2 = (plus.weight * plus.e2 + minus.weight * minus.e2) / eta;
        e4 = (plus.weight * plus.e4 + minus.weight * minus.e4) / eta;
        out.eta = eta;
    } else {
        const auto& dom = (d - u) >= (-d - u) ? plus : minus;
        e2 = dom.e2;
        e4 = dom.e4;
        out.eta = eta_floor;
        out.eta_clamped = true;
    }
    out.mean = e2;
    out.variance = std::max(0.0, e4 - e2 * e2);
    return out;
}

/// Non-null effects on the Fisher scale, delta_t = |g(r2_t) - g(r1_t)|.
struct AlternativeSpec {
    std::vector<double> deltas;

    [[nodiscard]] std::size_t s() const noexcept { return deltas.size(); }
    [[nodiscard]] double rho_s(std::size_t m) const { return static_cast<double>(s()) / static_cast<double>(m); }
    [[nodiscard]] double delta0_squared() const {
        math::CompensatedSum acc;
        for (double d : deltas) acc.add(d * d);
        return acc.value();
    }
    [[nodiscard]] double max_delta() const {
        return deltas.empty() ? 0.0 : *std::max_element(deltas.begin(), deltas.end());
    }
    [[nodiscard]] double min_delta() const {
        return deltas.empty() ? 0.0 : *std::min_element(deltas.begin(), deltas.end());
    }
    void validate(std::size_t m) const {
        if (s() > m) throw ValidationError("alternative has more non-null pairs than m");
        for (double d : deltas) {
            if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("effect sizes delta must be finite and >= 0");
        }
    }
};

struct BoundResult {
    double value = 0.0;      // lower bound on power, in [0, 1]
    double argument = 0.0;   // A, the Gumbel exponent argument, or B
    bool condition_met = false;
};

namespace detail {
inline void check_nm(std::size_t n, std::size_t m) {
    if (n < 4) throw ValidationError("power bound: need n >= 4");
    if (m < 1) throw ValidationError("power bound: need m >= 1");
}
inline double one_minus_exp_half_sq(double a) { return std::clamp(-std::expm1(-0.5 * a * a), 0.0, 1.0); }
} // namespace detail

/// H0 part of the exceedance variance, m eta0 ((1 - eta0) mu_w^2 + sigma_w^2)
/// per null pair.
inline double h0_exceedance_unit_variance(ExceedanceConfig cfg) {
    const double eta0 = 2.0 * math::normal_sf(cfg.u);
    const auto mom = exceedance_moments(cfg.u, cfg.w);
    return eta0 * ((1.0 - eta0) * mom.mean * mom.mean + mom.variance);
}

/// sigma^2_H1(m, w) under weak dependence (no cross-pair covariance term).
inline double sigma2_h1(const AlternativeSpec& alt, ExceedanceConfig cfg, std::size_t n, std::size_t m) {
    detail::check_nm(n, m);
    alt.validate(m);
    const double scale = std::sqrt(static_cast<double>(n) - 3.0);
    math::CompensatedSum acc;
    for (double delta : alt.deltas) {
        const auto h = h1_truncated_moments(delta * scale, cfg.u, cfg.w);
        acc.add(h.eta * ((1.0 - h.eta) * h.mean * h.mean + h.variance));
    }
    acc.add(static_cast<double>(m - alt.s()) * h0_exceedance_unit_variance(cfg));
    return acc.value();
}

/// Lower bound for the average-of-squares test.
inline BoundResult power_bound_squares(const AlternativeSpec& alt, std::size_t n, std::size_t m, double gamma2bar,
                                       double gamma2bar_h1, double alpha) {
    detail::check_nm(n, m);
    alt.validate(m);
    const double z = math::normal_upper_quantile(alpha);
    const double md = static_cast<double>(m);
    const double n3 = static_cast<double>(n) - 3.0;
    const double d0 = alt.delta0_squared();
    const double dep = 1.0 + (md - 1.0) * gamma2bar / 2.0;
    if (!(dep > 0.0)) throw DomainError("power_bound_squares: 1 + (m - 1) gamma2bar / 2 must be positive");
    BoundResult out;
    const double threshold = z * std::sqrt(2.0 * md) * std::sqrt(dep) / n3;
    out.condition_met = d0 > threshold;
    const double num = n3 / md * d0 - z * std::sqrt(2.0 / md * dep);
    const double var_h1 = 2.0 + 4.0 * static_cast<double>(alt.s()) * n3 * d0 / md + (md - 1.0) * gamma2bar_h1;
    if (!(var_h1 > 0.0)) throw DomainError("power_bound_squares: non-positive alternative variance");
    out.argument = num / (std::sqrt(var_h1) / std::sqrt(md));
    out.value = out.condition_met ? detail::one_minus_exp_half_sq(out.argument) : 0.0;
    return out;
}

enum class MaxBranch { FixedS, GrowingS };

/// sqrt(2 log 2m) - log(-log alpha) / sqrt(2 log 2m), the effect-size
/// threshold (times sqrt(n - 3)) for the maximum test.
inline double max_test_boundary(std::size_t m, double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("max test: alpha must lie in (0, 1/2)");
    const double l = std::sqrt(2.0 * std::log(2.0 * static_cast<double>(m)));
    return l - std::log(-std::log(alpha)) / l;
}

/// Lower bound for the maximum test. FixedS: 1 - exp(-(sqrt(n-3) max delta - c)^2 / 2)
/// with c the condition boundary. GrowingS: 1 - exp(-exp(sqrt(2 log 2s)
/// (sqrt(n-3) min delta - sqrt(2 log 2m)))).
inline BoundResult power_bound_max(const AlternativeSpec& alt, std::size_t n, std::size_t m, double alpha,
                                   MaxBranch branch = MaxBranch::FixedS) {
    detail::check_nm(n, m);
    alt.validate(m);
    const double c = max_test_boundary(m, alpha);
    const double root = std::sqrt(static_cast<double>(n) - 3.0);
    BoundResult out;
    if (alt.s() == 0) return out;
    if (branch == MaxBranch::FixedS) {
        const double x = root * alt.max_delta();
        out.condition_met = x > c;
        out.argument = x - c;
        out.value = out.condition_met ? detail::one_minus_exp_half_sq(out.argument) : 0.0;
        return out;
    }
    const double x = root * alt.min_delta();
    out.condition_met = x > c;
    if (!out.condition_met) return out;
    const double l = std::sqrt(2.0 * std::log(2.0 * static_cast<double>(m)));
    const double a_s = std::sqrt(2.0 * std::log(2.0 * static_cast<double>(alt.s())));
    out.argument = a_s * (x - l);
    out.value = std::clamp(-std::expm1(-std::exp(out.argument)), 0.0, 1.0);
    return out;
}

/// u must stay below sqrt(2 log 2m).
inline void check_exceedance_threshold(double u, std::size_t m) {
    if (!(u < std::sqrt(2.0 * std::log(2.0 * static_cast<double>(m))))) {
        throw DomainError("exceedance threshold u must be below sqrt(2 log 2m)");
    }
}

/// Lower bound for the sum-of-exceedances test, 1 - exp(-B^2 / 2).
inline BoundResult power_bound_exceed(const AlternativeSpec& alt, ExceedanceConfig cfg, std::size_t n,
                                      std::size_t m, double alpha) {
    detail::check_nm(n, m);
    alt.validate(m);
    cfg.validate();
    check_exceedance_threshold(cfg.u, m);
    const double z = math::normal_upper_quantile(alpha);
    const auto h0 = exceedance_null_ai(m, cfg);
    const double scale = std::sqrt(static_cast<double>(n) - 3.0);
    math::CompensatedSum signal;
    for (double delta : alt.deltas) {
        const auto h = h1_truncated_moments(delta * scale, cfg.u, cfg.w);
        signal.add(h.mean * h.eta);
    }
    const double rhs = static_cast<double>(alt.s()) * h0.eta0 * h0.mu_w + z * std::sqrt(h0.sigma2_mw);
    BoundResult out;
    out.condition_met = signal.value() > static_cast<double>(alt.s()) * h0.eta0 * h0.mu_w - z * std::sqrt(h0.sigma2_mw);
    out.argument = (signal.value() - rhs) / std::sqrt(sigma2_h1(alt, cfg, n, m));
    out.value = out.condition_met && out.argument > 0.0 ? detail::one_minus_exp_half_sq(out.argument) : 0.0;
    return out;
}

// ---------------------------------------------------------------- selection

/// Gamma(a, b) prior (rate b) on delta.
struct GammaPrior {
    double a = 3.0;
    double b = 10.0;
    double alpha_mode = 0.05;

    /// Mode pinned at z_alpha / sqrt(n - 3); variance defaults to mode^2.
    static GammaPrior from_mode(std::size_t n, double alpha = 0.05, std::optional<double> variance = std::nullopt) {
        if (n < 4) throw ValidationError("GammaPrior: need n >= 4");
        const double mode = math::normal_upper_quantile(alpha) / std::sqrt(static_cast<double>(n) - 3.0);
        const double var = variance.value_or(mode * mode);
        if (!(var > 0.0)) throw ValidationError("GammaPrior: variance must be positive");
        // (a - 1)/b = mode and a/b^2 = var  =>  var b^2 - mode b - 1 = 0.
        const double b = (mode + std::sqrt(mode * mode + 4.0 * var)) / (2.0 * var);
        return {var * b * b, b, alpha};
    }

    void validate() const {
        if (!(a > 1.0) || !std::isfinite(a)) throw ValidationError("GammaPrior: shape a must exceed 1");
        if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("GammaPrior: rate b must be positive");
    }

    [[nodiscard]] double mode() const { return (a - 1.0) / b; }
    [[nodiscard]] double variance() const { return a / (b * b); }

    [[nodiscard]] double pdf(double x) const {
        if (x <= 0.0) return 0.0;
        return std::exp(a * std::log(b) + (a - 1.0) * std::log(x) - b * x - std::lgamma(a));
    }

    [[nodiscard]] double quantile(double q) const { return boost::math::gamma_p_inv(a, q) / b; }
};

struct ThresholdSelection {
    double u = 0.0;          // min(u_optimal, cap)
    double u_optimal = 0.0;  // argmax of the integrated bound argument
    double cap = 0.0;        // z_{1 - alpha}
    std::vector<double> grid;
    std::vector<double> objective;
};

inline constexpr double threshold_grid_step = 0.01;
inline constexpr std::size_t threshold_quadrature_order = 512;

/// Quadrature over the prior's [q_0.0001, q_0.9999] range: nodes on the
/// delta scale and weights already multiplied by the prior density.
struct PriorQuadrature {
    std::vector<double> deltas;
    std::vector<double> weights;

    PriorQuadrature(const GammaPrior& prior, std::size_t order = threshold_quadrature_order) {
        prior.validate();
        const double lo = prior.quantile(1e-4);
        const double hi = prior.quantile(1.0 - 1e-4);
        const auto& rule = math::gauss_legendre(order);
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
            const double delta = 0.5 * (hi - lo) * rule.nodes[k] + 0.5 * (hi + lo);
            deltas.push_back(delta);
            weights.push_back(rule.weights[k] * 0.5 * (hi - lo) * prior.pdf(delta));
        }
    }
};

/// Integrated bound argument at threshold u, with s = m rho_s non-null
/// pairs sharing a common delta drawn from the prior.
inline double integrated_exceed_argument(std::size_t n, std::size_t m, double s, ExceedanceConfig cfg,
                                         const PriorQuadrature& quad, double alpha) {
    const double z = math::normal_upper_quantile(alpha);
    const auto h0 = exceedance_null_ai(m, cfg);
    const double md = static_cast<double>(m);
    const double null_unit = h0_exceedance_unit_variance(cfg);
    const double scale = std::sqrt(static_cast<double>(n) - 3.0);
    const double offset = s * h0.eta0 * h0.mu_w + z * std::sqrt(h0.sigma2_mw);
    math::CompensatedSum acc;
    for (std::size_t k = 0; k < quad.deltas.size(); ++k) {
        const auto h = h1_truncated_moments(quad.deltas[k] * scale, cfg.u, cfg.w);
        const double num = s * h.mean * h.eta - offset;
        const double var = s * h.eta * ((1.0 - h.eta) * h.mean * h.mean + h.variance) + (md - s) * null_unit;
        acc.add(quad.weights[k] * num / std::sqrt(var));
    }
    return acc.value();
}

/// u-hat = min(argmax_u integrated B, z_{1 - alpha}); the grid is
/// [0, sqrt(2 log 2m)) in steps of 0.01 and ties go to the smallest u.
inline ThresholdSelection select_threshold(std::size_t n, std::size_t m, double rho_s_hat, int w,
                                           const GammaPrior& prior, double alpha = 0.05,
                                           double step = threshold_grid_step) {
    prior.validate();
    detail::check_nm(n, m);
    if (!(rho_s_hat >= 0.0 && rho_s_hat <= 1.0)) throw ValidationError("select_threshold: rho_s must lie in [0, 1]");
    if (w != 0 && w != 1) throw ValidationError("select_threshold: w must be 0 or 1");
    if (!(step > 0.0)) throw ValidationError("select_threshold: grid step must be positive");
    ThresholdSelection out;
    out.cap = math::normal_upper_quantile(alpha);
    const double s = static_cast<double>(m) * rho_s_hat;
    if (s == 0.0) {
        out.u = out.u_optimal = out.cap;
        return out;
    }
    const PriorQuadrature quad(prior);
    const double umax = std::sqrt(2.0 * std::log(2.0 * static_cast<double>(m)));
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0;; ++i) {
        const double u = static_cast<double>(i) * step;
        if (!(u < umax)) break;
        const double v = integrated_exceed_argument(n, m, s, {u, w}, quad, alpha);
        out.grid.push_back(u);
        out.objective.push_back(v);
        if (v > best) {
            best = v;
            out.u_optimal = u;
        }
    }
    out.u = std::min(out.u_optimal, out.cap);
    return out;
}

} // namespace corrdiff
