#pragma once

// Null distributions of T_S, T_M and T_E: analytic (asymptotic
// independence), dependence-corrected with permutation-fitted parameters,
// and fully empirical.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "corrdiff/error.hpp"
#include "corrdiff/math.hpp"
#include "corrdiff/test_stats.hpp"

namespace corrdiff {

enum class NullRegime { AI, AD, NP };

inline std::string_view to_string(NullRegime r) noexcept {
    switch (r) {
    case NullRegime::AI: return "AI";
    case NullRegime::AD: return "AD";
    case NullRegime::NP: return "NP";
    }
    return "?";
}

namespace detail {
inline void check_level(double alpha, const char* who) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError(std::string(who) + ": level must lie in (0, 1)");
}
inline void check_kind(const StatisticValue& s, StatisticKind want, const char* who) {
    if (s.kind != want) throw ValidationError(std::string(who) + ": statistic kind mismatch");
}
} // namespace detail

// ---------------------------------------------------------------- squares

/// Normal approximation to T_S with var = (mu4 - mu2^2)/m + (1 - 1/m) gamma2bar.
struct SquaresNull {
    double mu2 = 1.0;
    double mu4 = 3.0;
    double gamma2bar = 0.0;
    std::size_t m = 1;

    static SquaresNull asymptotic(std::size_t m) { return {1.0, 3.0, 0.0, m}; }

    [[nodiscard]] double variance() const {
        if (m == 0) throw ValidationError("SquaresNull: m must be positive");
        const double md = static_cast<double>(m);
        const double v = (mu4 - mu2 * mu2) / md + (1.0 - 1.0 / md) * gamma2bar;
        if (!(v > 0.0) || !std::isfinite(v)) throw DegenerateError("SquaresNull: non-positive variance");
        return v;
    }

    /// t_{S,alpha} = mu2 + z_alpha sd.
    [[nodiscard]] double quantile(double alpha) const {
        detail::check_level(alpha, "SquaresNull::quantile");
        return mu2 + math::normal_upper_quantile(alpha) * std::sqrt(variance());
    }
};

inline double squares_pvalue(double observed, const SquaresNull& null) {
    return math::normal_sf((observed - null.mu2) / std::sqrt(null.variance()));
}

inline double squares_pvalue(const StatisticValue& stat, const SquaresNull& null) {
    detail::check_kind(stat, StatisticKind::Squares, "squares_pvalue");
    return squares_pvalue(stat.value, null);
}

// ----------------------------------------------------------------- maximum

/// sigma(m) = 1 / sqrt(2 log 2m).
inline double gumbel_scale(std::size_t m) {
    if (m == 0) throw ValidationError("gumbel_scale: m must be positive");
    return 1.0 / std::sqrt(2.0 * std::log(2.0 * static_cast<double>(m)));
}

/// Location of the theta = 1 law for the maximum of m independent |N(0,1)|:
/// the b solving 2m (1 - Phi(b)) = 1.
inline double gumbel_reference_location(std::size_t m) {
    if (m == 0) throw ValidationError("gumbel_reference_location: m must be positive");
    return math::normal_upper_quantile(0.5 / static_cast<double>(m));
}

/// Location that the fixed-scale Gumbel MLE converges to when the maxima
/// are exactly max_t |Z_t| over m independent N(0, 1):
/// -sigma log E[exp(-X / sigma)] under F(x) = (2 Phi(x) - 1)^m. This is the
/// theta = 1 reference for extremal-index estimates at finite m.
inline double gumbel_fit_reference(std::size_t m) {
    const double b = gumbel_reference_location(m);
    const double sigma = gumbel_scale(m);
    const double md = static_cast<double>(m);
    const double lo = std::max(0.0, b - 20.0 * sigma);
    const double hi = b + 40.0 * sigma;
    const auto& rule = math::gauss_legendre(64);
    constexpr int panels = 16;
    const double width = (hi - lo) / panels;
    // log of exp(-x / sigma) f(x), shifted by -b / sigma for range.
    auto log_term = [&](double x) {
        const double cdf_abs = -2.0 * math::normal_sf(x);
        return std::log(2.0 * md) + (md - 1.0) * std::log1p(cdf_abs) - 0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) -
               (x - b) / sigma;
    };
    math::CompensatedSum acc;
    for (int k = 0; k < panels; ++k) {
        const double a = lo + k * width;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double x = a + 0.5 * width * (rule.nodes[i] + 1.0);
            acc.add(0.5 * width * rule.weights[i] * std::exp(log_term(x)));
        }
    }
    return b - sigma * std::log(acc.value());
}

/// Corrected Gumbel law Pr(T_M <= x) = exp(-theta exp(-(x - location)/scale)).
struct GumbelNull {
    double location = 0.0;
    double scale = 1.0;
    double theta = 1.0;
    std::size_t m = 1;

    /// theta = 1, location b_m with 2m(1 - Phi(b_m)) = 1, scale sigma(m).
    static GumbelNull asymptotic(std::size_t m) {
        return {gumbel_reference_location(m), gumbel_scale(m), 1.0, m};
    }

    /// Leading-order expansion: location sqrt(2 log 2m).
    static GumbelNull leading_order(std::size_t m, double theta = 1.0) {
        const double s = gumbel_scale(m);
        return {1.0 / s, s, theta, m};
    }

    void validate() const {
        if (!(scale > 0.0)) throw ValidationError("GumbelNull: scale must be positive");
        if (!(theta > 0.0 && theta <= 1.0)) throw ValidationError("GumbelNull: theta must lie in (0, 1]");
        if (!std::isfinite(location)) throw ValidationError("GumbelNull: location must be finite");
    }

    [[nodiscard]] double cdf(double x) const {
        validate();
        return std::exp(-theta * std::exp(-(x - location) / scale));
    }
};

/// The x with Pr(T_M <= x) = level: location + scale (log theta - log(-log level)).
/// The level-alpha rejection threshold is gumbel_quantile(null, 1 - alpha).
inline double gumbel_quantile(const GumbelNull& null, double level) {
    null.validate();
    detail::check_level(level, "gumbel_quantile");
    return null.location + null.scale * (std::log(null.theta) - std::log(-std::log(level)));
}

inline double gumbel_pvalue(double observed, const GumbelNull& null) {
    null.validate();
    return -std::expm1(-null.theta * std::exp(-(observed - null.location) / null.scale));
}

inline double gumbel_pvalue(const StatisticValue& stat, const GumbelNull& null) {
    detail::check_kind(stat, StatisticKind::Max, "gumbel_pvalue");
    return gumbel_pvalue(stat.value, null);
}

// -------------------------------------------------------------- exceedance

struct ExceedanceMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean and variance of (|Z| - u w)^2 given |Z| > u, Z ~ N(0, 1).
inline ExceedanceMoments exceedance_moments(double u, int w) {
    ExceedanceConfig{u, w}.validate();
    const double mills = math::normal_pdf(u) / math::normal_sf(u);
    if (w == 0) {
        const double mu = 1.0 + u * mills;
        return {mu, 3.0 + (u * u * u + 3.0 * u) * mills - mu * mu};
    }
    const double u2 = u * u;
    const double mu = u2 + 1.0 - u * mills;
    return {mu, 3.0 + u2 * u2 + 6.0 * u2 - (5.0 * u + u2 * u) * mills - mu * mu};
}

/// Normal approximation to T_E with mean m eta0 mu_w.
struct ExceedanceNull {
    ExceedanceConfig cfg{};
    double eta0 = 1.0;
    double phibar = 1.0;
    double mu_w = 1.0;
    double sigma2_w = 2.0;
    double mu_mw = 0.0;
    double sigma2_mw = 1.0;
    std::size_t m = 1;

    [[nodiscard]] double sd() const {
        if (!(sigma2_mw > 0.0) || !std::isfinite(sigma2_mw)) {
            throw DegenerateError("ExceedanceNull: non-positive variance");
        }
        return std::sqrt(sigma2_mw);
    }

    /// t_{E,alpha} = mu(m,w) + z_alpha sigma(m,w).
    [[nodiscard]] double quantile(double alpha) const {
        detail::check_level(alpha, "ExceedanceNull::quantile");
        return mu_mw + math::normal_upper_quantile(alpha) * sd();
    }
};

/// Builds the T_E null. With phibar = eta0^2 and gamma_sum = 0 the variance
/// is evaluated in its simplified form m eta0 ((1 - eta0) mu_w^2 + sigma_w^2).
inline ExceedanceNull exceedance_null(std::size_t m, ExceedanceConfig cfg, double eta0, double phibar,
                                      double gamma_sum = 0.0) {
    cfg.validate();
    if (m == 0) throw ValidationError("exceedance_null: m must be positive");
    if (!(eta0 > 0.0 && eta0 <= 1.0)) throw ValidationError("exceedance_null: eta0 must lie in (0, 1]");
    if (!(phibar >= 0.0 && phibar <= 1.0)) throw ValidationError("exceedance_null: phibar must lie in [0, 1]");
    const auto mom = exceedance_moments(cfg.u, cfg.w);
    const double md = static_cast<double>(m);
    ExceedanceNull out;
    out.cfg = cfg;
    out.eta0 = eta0;
    out.phibar = phibar;
    out.mu_w = mom.mean;
    out.sigma2_w = mom.variance;
    out.m = m;
    out.mu_mw = md * eta0 * mom.mean;
    const double mu2 = mom.mean * mom.mean;
    if (phibar == eta0 * eta0 && gamma_sum == 0.0) {
        out.sigma2_mw = md * eta0 * ((1.0 - eta0) * mu2 + mom.variance);
    } else {
        out.sigma2_mw = md * (eta0 * mom.variance + mu2 * (eta0 - phibar)) + md * md * mu2 * (phibar - eta0 * eta0) +
                        gamma_sum;
    }
    if (!(out.sigma2_mw > 0.0)) throw DegenerateError("exceedance_null: non-positive variance");
    return out;
}

/// Asymptotic-independence null: eta0 = 2(1 - Phi(u)), phibar = eta0^2.
inline ExceedanceNull exceedance_null_ai(std::size_t m, ExceedanceConfig cfg) {
    cfg.validate();
    const double eta0 = 2.0 * math::normal_sf(cfg.u);
    return exceedance_null(m, cfg, eta0, eta0 * eta0, 0.0);
}

inline double exceedance_pvalue(double observed, const ExceedanceNull& null) {
    return math::normal_sf((observed - null.mu_mw) / null.sd());
}

inline double exceedance_pvalue(const StatisticValue& stat, const ExceedanceNull& null) {
    detail::check_kind(stat, StatisticKind::Exceedance, "exceedance_pvalue");
    if (!(stat.cfg == null.cfg)) throw ValidationError("exceedance_pvalue: threshold configuration mismatch");
    return exceedance_pvalue(stat.value, null);
}

// --------------------------------------------------------------- empirical

struct EmpiricalNull {
    StatisticKind kind = StatisticKind::Squares;
    ExceedanceConfig cfg{};
    std::vector<double> replicates;
};

/// (1 + #{replicates >= observed}) / (B + 1).
inline double empirical_pvalue(double observed, std::span<const double> replicates) {
    if (replicates.empty()) throw InsufficientReplicatesError("empirical_pvalue: no replicates");
    std::size_t count = 0;
    for (double r : replicates) count += r >= observed ? 1 : 0;
    return static_cast<double>(count + 1) / static_cast<double>(replicates.size() + 1);
}

inline double empirical_pvalue(const StatisticValue& stat, const EmpiricalNull& null) {
    detail::check_kind(stat, null.kind, "empirical_pvalue");
    if (stat.kind == StatisticKind::Exceedance && !(stat.cfg == null.cfg)) {
        throw ValidationError("empirical_pvalue: threshold configuration mismatch");
    }
    return empirical_pvalue(stat.value, null.replicates);
}

// ------------------------------------------------------------------ union

using NullModel = std::variant<SquaresNull, GumbelNull, ExceedanceNull, EmpiricalNull>;

struct TestResult {
    StatisticValue statistic{};
    NullRegime regime = NullRegime::AI;
    double p_value = 1.0;
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t m = 0;
    std::size_t b = 0;
    std::uint64_t seed = 0;
};

inline double pvalue(const StatisticValue& stat, const NullModel& null) {
    return std::visit(
        [&stat](const auto& model) -> double {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, SquaresNull>) return squares_pvalue(stat, model);
            else if constexpr (std::is_same_v<T, GumbelNull>) return gumbel_pvalue(stat, model);
            else if constexpr (std::is_same_v<T, ExceedanceNull>) return exceedance_pvalue(stat, model);
            else return empirical_pvalue(stat, model);
        },
        null);
}

} // namespace corrdiff
