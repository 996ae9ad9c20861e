#pragma once

// Paired-swap permutation replicates of D-hat and the estimators built on
// them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/error.hpp"
#include "corrdiff/math.hpp"
#include "corrdiff/null_dist.hpp"
#include "corrdiff/parallel.hpp"
#include "corrdiff/random.hpp"
#include "corrdiff/test_stats.hpp"

namespace corrdiff {

inline constexpr std::size_t default_b_ad = 200;
inline constexpr std::size_t default_b_np = 1000;

using SwapMask = std::vector<std::uint8_t>;

/// Swap indicators for replicate `index`: one Bernoulli(1/2) bit per
/// observation pair, drawn from the stream keyed by (seed, stream, index).
inline SwapMask swap_mask(std::size_t n, std::uint64_t seed, std::uint64_t stream, std::size_t index) {
    StreamRng rng(seed, {stream, static_cast<std::uint64_t>(index)});
    SwapMask mask(n);
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k % 64 == 0) bits = rng();
        mask[k] = static_cast<std::uint8_t>((bits >> (k % 64)) & 1u);
    }
    return mask;
}

/// Recomputes D-hat on paired-swapped copies of one dataset. Not thread
/// safe; use one instance (or one Workspace) per worker.
class PermutationKernel {
public:
    struct Workspace {
        Eigen::MatrixXd z;
        Eigen::MatrixXd r;
        detail::CorrelationWorkspace corr;
    };

    explicit PermutationKernel(const PairedDataset& data)
        : data_(&data), idx_(data.p()), scale_(std::sqrt(static_cast<double>(data.n()) - 3.0)) {
        data.validate();
    }

    [[nodiscard]] std::size_t m() const noexcept { return idx_.size(); }
    [[nodiscard]] std::size_t n() const noexcept { return data_->n(); }
    [[nodiscard]] const PairIndexSet& pairs() const noexcept { return idx_; }

    /// D-hat of the dataset with rows k swapped where mask[k] != 0.
    void compute(std::span<const std::uint8_t> mask, std::span<double> d, Workspace& ws) const {
        const auto n = static_cast<Eigen::Index>(data_->n());
        const auto p = static_cast<Eigen::Index>(data_->p());
        if (mask.size() != data_->n()) throw ValidationError("swap mask length must equal n");
        if (d.size() != m()) throw ValidationError("difference buffer length must equal m");
        ws.z.resize(n, 2 * p);
        ws.z.leftCols(p) = data_->x;
        ws.z.rightCols(p) = data_->y;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (mask[static_cast<std::size_t>(k)] != 0) {
                ws.z.row(k).head(p) = data_->y.row(k);
                ws.z.row(k).tail(p) = data_->x.row(k);
            }
        }
        if (const auto bad = detail::joint_correlation(ws.z, ws.r, ws.corr); bad >= 0) {
            detail::throw_zero_variance(bad, data_->p(), data_->gene_ids);
        }
        detail::differences_from_joint(ws.r, idx_, scale_, d);
    }

private:
    const PairedDataset* data_;
    PairIndexSet idx_;
    double scale_;
};

/// B x m replicate matrix; row i is D-hat of the i-th paired-swap replicate.
struct ReplicateMatrix {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dtilde;
    std::size_t b = 0;
    std::uint64_t seed = 0;
    std::vector<SwapMask> swap_masks;

    [[nodiscard]] std::size_t m() const noexcept { return static_cast<std::size_t>(dtilde.cols()); }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return {dtilde.data() + i * m(), m()};
    }
};

/// Replicates for explicitly given swap masks.
inline ReplicateMatrix paired_permute_masks(const PairedDataset& data, std::vector<SwapMask> masks,
                                            unsigned threads = 1) {
    PermutationKernel kernel(data);
    ReplicateMatrix rep;
    rep.b = masks.size();
    rep.dtilde.resize(static_cast<Eigen::Index>(rep.b), static_cast<Eigen::Index>(kernel.m()));
    rep.swap_masks = std::move(masks);
    const std::size_t m = kernel.m();
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(rep.b, 1)));
    parallel_for(workers, workers, [&](std::size_t w) {
        PermutationKernel::Workspace ws;
        for (std::size_t i = w; i < rep.b; i += workers) {
            kernel.compute(rep.swap_masks[i], {rep.dtilde.data() + i * m, m}, ws);
        }
    });
    return rep;
}

/// b paired-swap replicates; each pair (x_k, y_k) is exchanged with
/// probability 1/2 independently per replicate.
inline ReplicateMatrix paired_permute(const PairedDataset& data, std::size_t b, std::uint64_t seed,
                                      unsigned threads = 1, std::uint64_t stream = 0) {
    if (b < 1) throw InsufficientReplicatesError("paired_permute: need b >= 1");
    std::vector<SwapMask> masks;
    masks.reserve(b);
    for (std::size_t i = 0; i < b; ++i) masks.push_back(swap_mask(data.n(), seed, stream, i));
    auto rep = paired_permute_masks(data, std::move(masks), threads);
    rep.seed = seed;
    return rep;
}

/// Per-replicate scalar summaries: enough to evaluate every statistic and
/// estimator without keeping the B x m matrix.
struct ReplicateSummaries {
    std::size_t m = 0;
    std::vector<double> sum_d2;
    std::vector<double> sum_d4;
    std::vector<double> max_abs;
    std::vector<ExceedanceConfig> cfgs;
    std::vector<std::vector<double>> t_exceed; // [cfg][replicate]

    [[nodiscard]] std::size_t b() const noexcept { return sum_d2.size(); }

    [[nodiscard]] std::vector<double> t_squares() const {
        std::vector<double> out(sum_d2.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = sum_d2[i] / static_cast<double>(m);
        return out;
    }

    [[nodiscard]] const std::vector<double>& exceedance(ExceedanceConfig cfg) const {
        for (std::size_t k = 0; k < cfgs.size(); ++k) {
            if (cfgs[k] == cfg) return t_exceed[k];
        }
        throw ValidationError("replicate summaries hold no exceedance statistic for the requested (u, w)");
    }

    /// The first k replicates.
    [[nodiscard]] ReplicateSummaries head(std::size_t k) const {
        if (k > b()) throw InsufficientReplicatesError("replicate summaries: requested more replicates than held");
        ReplicateSummaries out;
        out.m = m;
        out.cfgs = cfgs;
        auto take = [k](const std::vector<double>& v) { return std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k)); };
        out.sum_d2 = take(sum_d2);
        out.sum_d4 = take(sum_d4);
        out.max_abs = take(max_abs);
        for (const auto& t : t_exceed) out.t_exceed.push_back(take(t));
        return out;
    }

    void resize(std::size_t b, std::size_t m_, std::vector<ExceedanceConfig> c) {
        m = m_;
        sum_d2.assign(b, 0.0);
        sum_d4.assign(b, 0.0);
        max_abs.assign(b, 0.0);
        cfgs = std::move(c);
        t_exceed.assign(cfgs.size(), std::vector<double>(b, 0.0));
    }

    void fill(std::size_t i, std::span<const double> d) {
        math::CompensatedSum s2, s4;
        double mx = 0.0;
        for (double x : d) {
            const double x2 = x * x;
            s2.add(x2);
            s4.add(x2 * x2);
            mx = std::max(mx, std::abs(x));
        }
        sum_d2[i] = s2.value();
        sum_d4[i] = s4.value();
        max_abs[i] = mx;
        for (std::size_t k = 0; k < cfgs.size(); ++k) t_exceed[k][i] = corrdiff::t_exceed(d, cfgs[k]).value;
    }
};

inline ReplicateSummaries summarize_replicates(const ReplicateMatrix& rep, std::vector<ExceedanceConfig> cfgs = {}) {
    ReplicateSummaries out;
    out.resize(rep.b, rep.m(), std::move(cfgs));
    for (std::size_t i = 0; i < rep.b; ++i) out.fill(i, rep.row(i));
    return out;
}

/// Streams b replicates straight into summaries (no B x m storage).
/// Replicate i uses the same swap mask as paired_permute(data, b, seed, _, stream).
inline ReplicateSummaries permutation_summaries(const PairedDataset& data, std::size_t b, std::uint64_t seed,
                                                std::vector<ExceedanceConfig> cfgs, unsigned threads = 1,
                                                std::uint64_t stream = 0) {
    if (b < 1) throw InsufficientReplicatesError("permutation_summaries: need b >= 1");
    PermutationKernel kernel(data);
    ReplicateSummaries out;
    out.resize(b, kernel.m(), std::move(cfgs));
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), b));
    // Static partition: worker w handles replicates w, w + workers, ...
    parallel_for(workers, workers, [&](std::size_t w) {
        PermutationKernel::Workspace ws;
        std::vector<double> d(kernel.m());
        for (std::size_t i = w; i < b; i += workers) {
            kernel.compute(swap_mask(data.n(), seed, stream, i), d, ws);
            out.fill(i, d);
        }
    });
    return out;
}

/// Applies a test statistic to every replicate row.
inline std::vector<double> replicate_statistics(const ReplicateMatrix& rep, StatisticKind kind,
                                                ExceedanceConfig cfg = {}) {
    std::vector<double> out(rep.b);
    for (std::size_t i = 0; i < rep.b; ++i) {
        switch (kind) {
        case StatisticKind::Squares: out[i] = t_squares(rep.row(i)).value; break;
        case StatisticKind::Max: out[i] = t_max(rep.row(i)).value; break;
        case StatisticKind::Exceedance: out[i] = t_exceed(rep.row(i), cfg).value; break;
        }
    }
    return out;
}

// ---------------------------------------------------------------- estimators

struct SquaresParams {
    double mu2_hat = 0.0;
    double mu4_hat = 0.0;
    double gamma2bar_hat = 0.0;

    [[nodiscard]] SquaresNull null(std::size_t m) const { return {mu2_hat, mu4_hat, gamma2bar_hat, m}; }
};

/// mu2, mu4 as grand means of D~^2 and D~^4; gamma2bar by inverting
/// var(T_S) = (mu4 - mu2^2)/m + (1 - 1/m) gamma2bar at the across-replicate
/// sample variance of T_S.
inline SquaresParams estimate_squares_params(const ReplicateSummaries& s) {
    if (s.b() < 2) throw InsufficientReplicatesError("estimate_squares_params: need b >= 2");
    const double md = static_cast<double>(s.m);
    const double mb = md * static_cast<double>(s.b());
    SquaresParams out;
    out.mu2_hat = math::compensated_sum(s.sum_d2) / mb;
    out.mu4_hat = math::compensated_sum(s.sum_d4) / mb;
    const double var_ts = math::sample_variance(s.t_squares());
    out.gamma2bar_hat = s.m > 1 ? (var_ts - (out.mu4_hat - out.mu2_hat * out.mu2_hat) / md) / (1.0 - 1.0 / md) : 0.0;
    return out;
}

inline SquaresParams estimate_squares_params(const ReplicateMatrix& rep) {
    return estimate_squares_params(summarize_replicates(rep));
}

struct GumbelFit {
    double location = 0.0;
    double scale = 1.0;
    double theta = 1.0;
    std::size_t m = 1;

    /// Null used for dependence-corrected p-values: the fitted location
    /// carries the extremal-index shift, so theta enters as 1.
    [[nodiscard]] GumbelNull null() const { return {location, scale, 1.0, m}; }
};

inline constexpr std::size_t min_replicates_gumbel = 20;

/// Location MLE for a Gumbel sample with scale fixed at sigma(m):
/// location = -sigma log(mean exp(-x_i / sigma)). theta is the location
/// shift against the finite-m theta = 1 reference, clipped to (0, 1].
inline GumbelFit fit_gumbel_null(std::span<const double> maxima, std::size_t m) {
    if (maxima.size() < min_replicates_gumbel) {
        throw InsufficientReplicatesError("fit_gumbel_null: need at least 20 replicate maxima");
    }
    const double scale = gumbel_scale(m);
    const double lo = *std::min_element(maxima.begin(), maxima.end());
    math::CompensatedSum acc;
    for (double x : maxima) acc.add(std::exp(-(x - lo) / scale));
    GumbelFit fit;
    fit.scale = scale;
    fit.m = m;
    fit.location = lo - scale * std::log(acc.value() / static_cast<double>(maxima.size()));
    const double theta = std::exp((fit.location - gumbel_fit_reference(m)) / scale);
    fit.theta = std::clamp(theta, std::numeric_limits<double>::min(), 1.0);
    return fit;
}

inline GumbelFit fit_gumbel_null(const ReplicateSummaries& s) { return fit_gumbel_null(s.max_abs, s.m); }

inline GumbelFit fit_gumbel_null(const ReplicateMatrix& rep) {
    return fit_gumbel_null(replicate_statistics(rep, StatisticKind::Max), rep.m());
}

/// Gaussian variance MLE around the analytic mean mu(m, w).
inline double fit_exceedance_variance(std::span<const double> t_e, double mu_mw) {
    if (t_e.size() < 20) throw InsufficientReplicatesError("fit_exceedance_variance: need at least 20 replicates");
    math::CompensatedSum acc;
    for (double t : t_e) acc.add((t - mu_mw) * (t - mu_mw));
    const double v = acc.value() / static_cast<double>(t_e.size());
    if (!(v > 0.0)) throw DegenerateError("fit_exceedance_variance: zero variance");
    return v;
}

inline double fit_exceedance_variance(const ReplicateMatrix& rep, ExceedanceConfig cfg) {
    const auto mu = exceedance_null_ai(rep.m(), cfg).mu_mw;
    return fit_exceedance_variance(replicate_statistics(rep, StatisticKind::Exceedance, cfg), mu);
}

/// Dependence-corrected T_E null: analytic mean, permutation variance.
inline ExceedanceNull exceedance_null_ad(std::size_t m, ExceedanceConfig cfg, std::span<const double> t_e) {
    auto null = exceedance_null_ai(m, cfg);
    null.sigma2_mw = fit_exceedance_variance(t_e, null.mu_mw);
    return null;
}

struct PermutationEstimates {
    SquaresParams squares;
    GumbelFit gumbel;
    std::vector<ExceedanceConfig> cfgs;
    std::vector<double> sigma2_mw_hat;
    ReplicateSummaries replicates;
};

/// All AD parameters from one set of replicate summaries.
inline PermutationEstimates estimate_all(ReplicateSummaries s) {
    PermutationEstimates out;
    out.squares = estimate_squares_params(s);
    out.gumbel = fit_gumbel_null(s);
    out.cfgs = s.cfgs;
    for (std::size_t k = 0; k < s.cfgs.size(); ++k) {
        const double mu = exceedance_null_ai(s.m, s.cfgs[k]).mu_mw;
        out.sigma2_mw_hat.push_back(fit_exceedance_variance(s.t_exceed[k], mu));
    }
    out.replicates = std::move(s);
    return out;
}

} // namespace corrdiff
