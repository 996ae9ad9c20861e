#pragma once

// Paired sample correlations, Fisher transforms, the asymptotic correlation
// between Fisher-transformed sample correlations, and the standardized
// difference vector D.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "corrdiff/error.hpp"

namespace corrdiff {

/// Upper bound applied to the estimated cross-condition correlation
/// psi^(12)_tt before it enters the denominator of d_t.
inline constexpr double psi_clamp_epsilon = 1e-6;

/// g(z) = atanh(z) = log((1 + z) / (1 - z)) / 2.
inline double fisher_transform(double z) {
    if (!(std::abs(z) < 1.0)) {
        std::ostringstream msg;
        msg << "fisher_transform: argument must satisfy |z| < 1, got " << z;
        throw DomainError(msg.str());
    }
    return std::atanh(z);
}

/// A pair of variable indices (first < second).
struct VariablePair {
    std::size_t first = 0;
    std::size_t second = 0;
    friend bool operator==(const VariablePair&, const VariablePair&) = default;
};

/// Lexicographically ordered pairs (i, j), i < j, of p variables.
class PairIndexSet {
public:
    PairIndexSet() = default;

    explicit PairIndexSet(std::size_t p) : p_(p) {
        if (p < 2) throw ValidationError("PairIndexSet: need at least two variables");
        first_.reserve(p * (p - 1) / 2);
        second_.reserve(p * (p - 1) / 2);
        for (std::size_t i = 0; i + 1 < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                first_.push_back(static_cast<std::uint32_t>(i));
                second_.push_back(static_cast<std::uint32_t>(j));
            }
        }
    }

    [[nodiscard]] std::size_t dimension() const noexcept { return p_; }
    [[nodiscard]] std::size_t size() const noexcept { return first_.size(); }
    [[nodiscard]] VariablePair operator[](std::size_t k) const noexcept {
        return {first_[k], second_[k]};
    }
    [[nodiscard]] std::span<const std::uint32_t> firsts() const noexcept { return first_; }
    [[nodiscard]] std::span<const std::uint32_t> seconds() const noexcept { return second_; }

    /// Position of (i, j), i < j, in the lexicographic layout.
    [[nodiscard]] std::size_t index_of(std::size_t i, std::size_t j) const {
        if (!(i < j && j < p_)) throw ValidationError("PairIndexSet::index_of: need i < j < p");
        return i * p_ - i * (i + 1) / 2 + (j - i - 1);
    }

private:
    std::size_t p_ = 0;
    std::vector<std::uint32_t> first_;
    std::vector<std::uint32_t> second_;
};

/// Two n x p observation matrices whose rows are paired (row k of x and
/// row k of y come from the same subject).
struct PairedDataset {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    std::vector<std::string> gene_ids;

    PairedDataset() = default;
    PairedDataset(Eigen::MatrixXd x_, Eigen::MatrixXd y_, std::vector<std::string> ids = {})
        : x(std::move(x_)), y(std::move(y_)), gene_ids(std::move(ids)) {
        if (gene_ids.empty()) {
            gene_ids.reserve(static_cast<std::size_t>(x.cols()));
            for (Eigen::Index j = 0; j < x.cols(); ++j) gene_ids.push_back("gene_" + std::to_string(j));
        }
        validate();
    }

    [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(x.rows()); }
    [[nodiscard]] std::size_t p() const noexcept { return static_cast<std::size_t>(x.cols()); }

    void validate() const {
        if (x.rows() != y.rows() || x.cols() != y.cols()) {
            throw ValidationError("PairedDataset: x and y must have identical dimensions");
        }
        if (x.rows() < 4) throw ValidationError("PairedDataset: need n >= 4 paired observations");
        if (x.cols() < 2) throw ValidationError("PairedDataset: need p >= 2 variables");
        if (gene_ids.size() != static_cast<std::size_t>(x.cols())) {
            throw ValidationError("PairedDataset: gene_ids must have one entry per column");
        }
        if (!x.allFinite() || !y.allFinite()) {
            throw ValidationError("PairedDataset: observations must be finite");
        }
    }
};

/// Sample correlation matrices of the two conditions and the cross-condition
/// matrix r12(i, j) = cor(x_i, y_j).
struct CorrelationEstimates {
    Eigen::MatrixXd r1;
    Eigen::MatrixXd r2;
    Eigen::MatrixXd r12;
    std::size_t n = 0;

    [[nodiscard]] std::size_t p() const noexcept { return static_cast<std::size_t>(r1.rows()); }

    /// The 2p x 2p correlation matrix of (x, y).
    [[nodiscard]] Eigen::MatrixXd joint() const {
        const Eigen::Index p = r1.rows();
        Eigen::MatrixXd r(2 * p, 2 * p);
        r.topLeftCorner(p, p) = r1;
        r.bottomRightCorner(p, p) = r2;
        r.topRightCorner(p, p) = r12;
        r.bottomLeftCorner(p, p) = r12.transpose();
        return r;
    }
};

/// D-hat and its ingredients, all in the lexicographic pair layout.
struct StandardizedDifferences {
    std::vector<double> d;
    std::vector<double> psi12_diag;
    std::vector<double> u1;
    std::vector<double> u2;

    [[nodiscard]] std::size_t size() const noexcept { return d.size(); }
};

namespace detail {

/// Reusable buffers for turning a stacked n x 2p matrix into its 2p x 2p
/// Pearson correlation matrix.
struct CorrelationWorkspace {
    Eigen::MatrixXd centered;
    Eigen::VectorXd inv_norm;
};

/// Pearson correlations of the columns of `z` (n x k). Every entry is a
/// plain sequential sum over rows, so the value for a pair of columns does
/// not depend on where the columns sit in `z` (swapping the x and y blocks
/// permutes the result exactly). Returns the first zero-variance column, or -1.
inline Eigen::Index joint_correlation(const Eigen::MatrixXd& z, Eigen::MatrixXd& out, CorrelationWorkspace& ws) {
    const Eigen::Index n = z.rows();
    const Eigen::Index k = z.cols();
    ws.centered.resize(n, k);
    ws.inv_norm.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double* src = z.data() + j * n;
        double* dst = ws.centered.data() + j * n;
        double sum = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) sum += src[r];
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
            dst[r] = src[r] - mean;
            ss += dst[r] * dst[r];
        }
        if (!(ss > 0.0)) return j;
        ws.inv_norm[j] = 1.0 / std::sqrt(ss);
    }
    out.resize(k, k);
    const double* c = ws.centered.data();
    for (Eigen::Index j = 0; j < k; ++j) {
        out(j, j) = 1.0;
        const double* b = c + j * n;
        Eigen::Index i = j + 1;
        auto store = [&](Eigen::Index row, double g) {
            double r = g * (ws.inv_norm[row] * ws.inv_norm[j]);
            r = r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r);
            out(row, j) = r;
            out(j, row) = r;
        };
        for (; i + 4 <= k; i += 4) {
            const double* a0 = c + i * n;
            const double* a1 = a0 + n;
            const double* a2 = a1 + n;
            const double* a3 = a2 + n;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) {
                const double br = b[r];
                s0 += a0[r] * br;
                s1 += a1[r] * br;
                s2 += a2[r] * br;
                s3 += a3[r] * br;
            }
            store(i, s0);
            store(i + 1, s1);
            store(i + 2, s2);
            store(i + 3, s3);
        }
        for (; i < k; ++i) {
            const double* a0 = c + i * n;
            double s0 = 0.0;
            for (Eigen::Index r = 0; r < n; ++r) s0 += a0[r] * b[r];
            store(i, s0);
        }
    }
    return -1;
}

inline double omega(double r_ab, double r_ac, double r_cb) noexcept { return r_ab - r_ac * r_cb; }

/// psi between pairs (h, i) and (j, l) given an accessor r(a, b) into a
/// symmetric correlation matrix. Terms are grouped so that swapping the
/// two pairs yields a bit-identical result.
template <typename R>
double psi_from_accessor(R&& r, std::size_t h, std::size_t i, std::size_t j, std::size_t l) {
    const double den = (1.0 - r(h, i) * r(h, i)) * (1.0 - r(j, l) * r(j, l));
    if (!(den > 0.0) || !std::isfinite(den)) {
        throw DegenerateError("psi_cross: degenerate dependence (a correlation within a pair is +/-1)");
    }
    const double t1 = omega(r(h, j), r(h, i), r(i, j)) * omega(r(i, l), r(i, j), r(j, l));
    const double t2 = omega(r(h, j), r(h, l), r(l, j)) * omega(r(i, l), r(i, h), r(h, l));
    const double t3 = omega(r(h, l), r(h, i), r(i, l)) * omega(r(i, j), r(i, l), r(l, j));
    const double t4 = omega(r(h, l), r(h, j), r(j, l)) * omega(r(i, j), r(i, h), r(h, j));
    return 0.5 * ((t1 + t2) + (t3 + t4)) / den;
}

/// Fills d (and optionally psi/u1/u2) from a joint 2p x 2p correlation
/// matrix. `scale` is sqrt(n - 3).
inline void differences_from_joint(const Eigen::MatrixXd& r, const PairIndexSet& idx, double scale,
                                   std::span<double> d, std::span<double> psi_out = {},
                                   std::span<double> u1_out = {}, std::span<double> u2_out = {}) {
    const std::size_t p = idx.dimension();
    auto at = [&r](std::size_t a, std::size_t b) { return r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)); };
    const auto firsts = idx.firsts();
    const auto seconds = idx.seconds();
    for (std::size_t t = 0; t < idx.size(); ++t) {
        const std::size_t a = firsts[t];
        const std::size_t b = seconds[t];
        const double r1 = at(a, b);
        const double r2 = at(p + a, p + b);
        if (std::abs(r1) >= 1.0 || std::abs(r2) >= 1.0) {
            std::ostringstream msg;
            msg << "fisher_transform: |r| = 1 for pair (" << a << ", " << b << ") in condition "
                << (std::abs(r1) >= 1.0 ? "I" : "II");
            throw DomainError(msg.str());
        }
        const double u1 = std::atanh(r1) * scale;
        const double u2 = std::atanh(r2) * scale;
        double psi = psi_from_accessor(at, a, b, p + a, p + b);
        psi = std::clamp(psi, -1.0, 1.0 - psi_clamp_epsilon);
        const double delta = u2 - u1;
        d[t] = delta == 0.0 ? 0.0 : delta / std::sqrt(2.0 * (1.0 - psi));
        if (!psi_out.empty()) psi_out[t] = psi;
        if (!u1_out.empty()) u1_out[t] = u1;
        if (!u2_out.empty()) u2_out[t] = u2;
    }
}

[[noreturn]] inline void throw_zero_variance(Eigen::Index column, std::size_t p,
                                             const std::vector<std::string>& gene_ids) {
    const auto j = static_cast<std::size_t>(column);
    const std::size_t gene = j % p;
    std::ostringstream msg;
    msg << "zero-variance column for gene '" << (gene < gene_ids.size() ? gene_ids[gene] : std::to_string(gene))
        << "' in condition " << (j < p ? "I" : "II");
    throw ValidationError(msg.str());
}

} // namespace detail

/// Pearson correlation matrices r1 = cor(x), r2 = cor(y), r12 = cor(x, y).
/// Columns are centred and scaled before the cross-products are formed.
inline CorrelationEstimates pearson_correlations(const PairedDataset& data) {
    data.validate();
    const Eigen::Index n = data.x.rows();
    const Eigen::Index p = data.x.cols();
    Eigen::MatrixXd z(n, 2 * p);
    z << data.x, data.y;
    Eigen::MatrixXd r;
    detail::CorrelationWorkspace ws;
    if (const auto bad = detail::joint_correlation(z, r, ws); bad >= 0) {
        detail::throw_zero_variance(bad, static_cast<std::size_t>(p), data.gene_ids);
    }
    CorrelationEstimates est;
    est.r1 = r.topLeftCorner(p, p);
    est.r2 = r.bottomRightCorner(p, p);
    est.r12 = r.topRightCorner(p, p);
    est.n = static_cast<std::size_t>(n);
    return est;
}

/// Asymptotic correlation between the Fisher-transformed sample
/// correlations of pairs s = (h, i) and t = (j, l), indices into the joint
/// correlation matrix `r_full`.
inline double psi_cross(const Eigen::MatrixXd& r_full, VariablePair s, VariablePair t) {
    const auto k = static_cast<std::size_t>(r_full.rows());
    if (r_full.cols() != r_full.rows()) throw ValidationError("psi_cross: correlation matrix must be square");
    for (std::size_t v : {s.first, s.second, t.first, t.second}) {
        if (v >= k) throw ValidationError("psi_cross: pair index out of range");
    }
    auto at = [&r_full](std::size_t a, std::size_t b) {
        return r_full(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    };
    return detail::psi_from_accessor(at, s.first, s.second, t.first, t.second);
}

/// d_t = (u2_t - u1_t) / sqrt(2 (1 - psi12_tt)), with u_K = atanh(r_K) sqrt(n - 3)
/// and psi12_tt the plug-in estimate, clamped to at most 1 - 1e-6.
inline StandardizedDifferences standardized_differences(const CorrelationEstimates& est, const PairIndexSet& idx) {
    if (est.n < 4) throw ValidationError("standardized_differences: need n >= 4");
    if (idx.dimension() != est.p()) throw ValidationError("standardized_differences: pair set dimension mismatch");
    const std::size_t m = idx.size();
    StandardizedDifferences out;
    out.d.resize(m);
    out.psi12_diag.resize(m);
    out.u1.resize(m);
    out.u2.resize(m);
    detail::differences_from_joint(est.joint(), idx, std::sqrt(static_cast<double>(est.n) - 3.0), out.d,
                                   out.psi12_diag, out.u1, out.u2);
    return out;
}

/// Convenience: D-hat straight from a dataset.
inline StandardizedDifferences standardized_differences(const PairedDataset& data) {
    return standardized_differences(pearson_correlations(data), PairIndexSet(data.p()));
}

} // namespace corrdiff
