#pragma once

// Storey's pi0 estimator with a cubic smoothing spline over the lambda grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "corrdiff/error.hpp"

namespace corrdiff {

/// Natural cubic smoothing spline (Reinsch form) with its smoothing
/// parameter chosen so that the trace of the smoother matrix equals `df`.
/// Returns the fitted values at the knots `x` (strictly increasing).
inline std::vector<double> smoothing_spline_fit(std::span<const double> x, std::span<const double> y, double df) {
    const auto n = static_cast<Eigen::Index>(x.size());
    if (n < 3 || y.size() != x.size()) throw ValidationError("smoothing spline: need >= 3 points of equal length");
    if (!(df > 2.0 && df <= static_cast<double>(n))) throw ValidationError("smoothing spline: df must lie in (2, n]");
    Eigen::VectorXd h(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        h[i] = x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)];
        if (!(h[i] > 0.0)) throw ValidationError("smoothing spline: knots must be strictly increasing");
    }
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n - 2);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n - 2, n - 2);
    for (Eigen::Index j = 0; j < n - 2; ++j) {
        q(j, j) = 1.0 / h[j];
        q(j + 1, j) = -1.0 / h[j] - 1.0 / h[j + 1];
        q(j + 2, j) = 1.0 / h[j + 1];
        r(j, j) = (h[j] + h[j + 1]) / 3.0;
        if (j + 1 < n - 2) r(j, j + 1) = r(j + 1, j) = h[j + 1] / 6.0;
    }
    const Eigen::MatrixXd k = q * r.ldlt().solve(q.transpose());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    auto smoother = [&](double lambda) { return Eigen::MatrixXd((eye + lambda * k).inverse()); };

    // trace(S) falls monotonically from n (lambda = 0) to 2 (lambda -> inf).
    double lo = -30.0, hi = 30.0; // log lambda
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (smoother(std::exp(mid)).trace() > df) lo = mid;
        else hi = mid;
    }
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const Eigen::VectorXd fit = smoother(std::exp(0.5 * (lo + hi))) * yv;
    return {fit.data(), fit.data() + n};
}

inline std::vector<double> storey_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 19; ++i) grid.push_back(0.05 * i);
    return grid;
}

/// pi0 = smoothed #{p > lambda} / (m (1 - lambda)) evaluated at the largest
/// lambda, clipped to [0, 1].
inline double storey_pi0(std::span<const double> pvalues) {
    if (pvalues.empty()) throw ValidationError("storey_pi0: no p-values");
    for (double p : pvalues) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("storey_pi0: p-values must lie in [0, 1]");
    }
    std::vector<double> sorted(pvalues.begin(), pvalues.end());
    std::sort(sorted.begin(), sorted.end());
    const auto lambdas = storey_lambda_grid();
    const double m = static_cast<double>(sorted.size());
    std::vector<double> pi0(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), lambdas[i]);
        pi0[i] = static_cast<double>(above) / (m * (1.0 - lambdas[i]));
    }
    const auto fit = smoothing_spline_fit(lambdas, pi0, 3.0);
    return std::clamp(fit.back(), 0.0, 1.0);
}

/// Fraction of non-null pairs, 1 - pi0.
inline double estimate_rho_s(std::span<const double> pvalues) { return 1.0 - storey_pi0(pvalues); }

} // namespace corrdiff
