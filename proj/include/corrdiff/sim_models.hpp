#pragma once

// Simulation models: an iid sanity model, a dense ridge-regularized
// correlation model and a sparse power-law precision model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/error.hpp"
#include "corrdiff/random.hpp"

namespace corrdiff {

enum class Hypothesis { H0, H1 };

inline std::string to_string(Hypothesis h) { return h == Hypothesis::H0 ? "H0" : "H1"; }

namespace detail {

inline Eigen::MatrixXd standard_normal(std::size_t rows, std::size_t cols, StreamRng& rng) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
    }
    return z;
}

inline Eigen::MatrixXd to_correlation(const Eigen::MatrixXd& s) {
    const Eigen::VectorXd inv = s.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd r = inv.asDiagonal() * s * inv.asDiagonal();
    r = 0.5 * (r + r.transpose()).eval();
    r.diagonal().setOnes();
    return r;
}

inline Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd& s, const char* who) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw Error(std::string(who) + ": matrix is not positive definite");
    return llt.matrixL();
}

} // namespace detail

// ------------------------------------------------------------------- iid

struct IidModelConfig {
    std::size_t p = 40;
    std::size_t n = 100;
    std::uint64_t seed = 1;

    void validate() const {
        if (p < 2 || n < 4) throw ValidationError("iid model: need p >= 2 and n >= 4");
    }
};

/// X and Y independent N(0, I).
inline PairedDataset gen_iid(const IidModelConfig& cfg, std::size_t replicate = 0) {
    cfg.validate();
    StreamRng rng(cfg.seed, {2, replicate});
    Eigen::MatrixXd x = detail::standard_normal(cfg.n, cfg.p, rng);
    Eigen::MatrixXd y = detail::standard_normal(cfg.n, cfg.p, rng);
    return {std::move(x), std::move(y)};
}

// ----------------------------------------------------------------- dense

struct DenseModelConfig {
    std::size_t p = 50;
    std::size_t n = 50;
    double lambda = 0.5;
    Hypothesis hypothesis = Hypothesis::H0;
    std::vector<std::size_t> block_sizes{40, 10};
    std::uint64_t base_seed = 1;
    // Base correlation: sample correlation of n0 draws of a factor model.
    std::size_t n0 = 60;
    std::size_t factors = 3;
    double noise_sd = 0.5;

    void validate() const {
        if (p < 2 || n < 4) throw ValidationError("dense model: need p >= 2 and n >= 4");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("dense model: lambda must be > 0");
        if (n0 < 2 || factors < 1) throw ValidationError("dense model: need n0 >= 2 and at least one factor");
        if (!(noise_sd >= 0.0)) throw ValidationError("dense model: noise_sd must be >= 0");
        if (hypothesis == Hypothesis::H1) {
            std::size_t total = 0;
            for (auto b : block_sizes) total += b;
            if (block_sizes.size() < 2 || total != p) {
                throw ValidationError("dense model: H1 block sizes must sum to p");
            }
        }
    }
};

/// Sample correlation of n0 draws x = L f + noise_sd e with loadings L ~ U(-1, 1).
inline Eigen::MatrixXd synthetic_base_correlation(std::size_t p, std::size_t n0, std::size_t factors,
                                                  double noise_sd, std::uint64_t seed) {
    StreamRng rng(seed, {1});
    Eigen::MatrixXd loadings(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(factors));
    for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
        for (Eigen::Index i = 0; i < loadings.rows(); ++i) loadings(i, j) = rng.uniform(-1.0, 1.0);
    }
    const Eigen::MatrixXd f = detail::standard_normal(n0, factors, rng);
    const Eigen::MatrixXd e = detail::standard_normal(n0, p, rng);
    const Eigen::MatrixXd x = f * loadings.transpose() + noise_sd * e;
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    return detail::to_correlation(c.transpose() * c);
}

class DenseModel {
public:
    explicit DenseModel(DenseModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        base_ = synthetic_base_correlation(cfg_.p, cfg_.n0, cfg_.factors, cfg_.noise_sd, cfg_.base_seed);
        const auto p = static_cast<Eigen::Index>(cfg_.p);
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
        sigma1_ = detail::to_correlation(base_ + cfg_.lambda * eye);
        Eigen::MatrixXd second = base_;
        if (cfg_.hypothesis == Hypothesis::H1) {
            // Zero every between-block entry.
            std::vector<std::size_t> block(cfg_.p);
            std::size_t start = 0, id = 0;
            for (auto size : cfg_.block_sizes) {
                for (std::size_t k = 0; k < size; ++k) block[start + k] = id;
                start += size;
                ++id;
            }
            for (Eigen::Index i = 0; i < p; ++i) {
                for (Eigen::Index j = 0; j < p; ++j) {
                    if (block[static_cast<std::size_t>(i)] != block[static_cast<std::size_t>(j)]) second(i, j) = 0.0;
                }
            }
        }
        sigma2_ = detail::to_correlation(second + cfg_.lambda * eye);
        l1_ = detail::cholesky_lower(sigma1_, "dense model");
        l2_ = detail::cholesky_lower(sigma2_, "dense model");
    }

    [[nodiscard]] const DenseModelConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const Eigen::MatrixXd& base_correlation() const noexcept { return base_; }
    [[nodiscard]] const Eigen::MatrixXd& sigma1() const noexcept { return sigma1_; }
    [[nodiscard]] const Eigen::MatrixXd& sigma2() const noexcept { return sigma2_; }

    /// Independent X ~ N(0, Sigma1) and Y ~ N(0, Sigma2) for one replicate.
    [[nodiscard]] PairedDataset sample(std::size_t replicate) const {
        StreamRng rng(cfg_.base_seed, {2, replicate});
        Eigen::MatrixXd x = detail::standard_normal(cfg_.n, cfg_.p, rng) * l1_.transpose();
        Eigen::MatrixXd y = detail::standard_normal(cfg_.n, cfg_.p, rng) * l2_.transpose();
        return {std::move(x), std::move(y)};
    }

private:
    DenseModelConfig cfg_;
    Eigen::MatrixXd base_, sigma1_, sigma2_, l1_, l2_;
};

inline PairedDataset gen_dense(const DenseModelConfig& cfg, std::size_t replicate = 0) {
    return DenseModel(cfg).sample(replicate);
}

// ---------------------------------------------------------------- sparse

struct SparseModelConfig {
    std::size_t p = 70;
    std::size_t n = 200;
    Hypothesis hypothesis = Hypothesis::H0;
    double cross_link_value = 0.6;
    std::size_t block_size = 10;
    std::size_t h1_block_size = 15; // size of each of D1, D2
    double edge_low = 0.5;
    double edge_high = 0.9;
    double cross_edge_prob = -1.0; // < 0 means 2 / p
    double max_condition = -1.0;   // < 0 means 2p, the joint node count
    std::uint64_t seed = 1;

    [[nodiscard]] double cross_probability() const {
        return cross_edge_prob < 0.0 ? 2.0 / static_cast<double>(p) : cross_edge_prob;
    }

    [[nodiscard]] double condition_limit() const {
        return max_condition < 0.0 ? 2.0 * static_cast<double>(p) : max_condition;
    }

    void validate() const {
        if (n < 4) throw ValidationError("sparse model: need n >= 4");
        if (!(condition_limit() > 1.0)) throw ValidationError("sparse model: condition limit must exceed 1");
        if (block_size < 2) throw ValidationError("sparse model: block size must be >= 2");
        if (hypothesis == Hypothesis::H1 && h1_block_size < 2) throw ValidationError("sparse model: D blocks need >= 2 nodes");
        const std::size_t changed = hypothesis == Hypothesis::H1 ? 2 * h1_block_size : 0;
        if (p < changed + 2) throw ValidationError("sparse model: p too small for the H1 blocks");
        if (!(edge_low > 0.0 && edge_low <= edge_high)) throw ValidationError("sparse model: bad edge weight range");
        if (!(cross_probability() >= 0.0 && cross_probability() <= 1.0)) {
            throw ValidationError("sparse model: cross-edge probability must lie in [0, 1]");
        }
        if (!std::isfinite(cross_link_value)) throw ValidationError("sparse model: cross link must be finite");
    }
};

/// Preferential-attachment tree on k nodes: node i attaches to one earlier
/// node chosen with probability proportional to its degree.
inline std::vector<std::pair<std::size_t, std::size_t>> barabasi_albert_tree(std::size_t k, StreamRng& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    if (k < 2) return edges;
    std::vector<std::size_t> ends{0, 1}; // every edge endpoint, so sampling is degree-weighted
    edges.emplace_back(0, 1);
    for (std::size_t i = 2; i < k; ++i) {
        const auto pick = ends[static_cast<std::size_t>(rng.uniform() * static_cast<double>(ends.size()))];
        edges.emplace_back(pick, i);
        ends.push_back(pick);
        ends.push_back(i);
    }
    return edges;
}

/// Almost-block-diagonal power-law graph: trees within consecutive blocks
/// plus Bernoulli(prob) edges between blocks.
inline Eigen::MatrixXi block_power_law_graph(std::size_t p, std::size_t block, double prob, StreamRng& rng) {
    const auto pp = static_cast<Eigen::Index>(p);
    Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(pp, pp);
    for (std::size_t start = 0; start < p; start += block) {
        const std::size_t k = std::min(block, p - start);
        for (auto [a, b] : barabasi_albert_tree(k, rng)) {
            adj(static_cast<Eigen::Index>(start + a), static_cast<Eigen::Index>(start + b)) = 1;
            adj(static_cast<Eigen::Index>(start + b), static_cast<Eigen::Index>(start + a)) = 1;
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = j + 1; i < p; ++i) {
            if (i / block == j / block) continue;
            if (rng.uniform() < prob) {
                adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
                adj(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1;
            }
        }
    }
    return adj;
}

/// Unit diagonal, +/-U(low, high) on edges (sign +/- with probability 1/2),
/// drawn on the lower triangle and mirrored.
inline Eigen::MatrixXd weighted_precision(const Eigen::MatrixXi& adj, double low, double high, StreamRng& rng) {
    const auto p = adj.rows();
    Eigen::MatrixXd omega = Eigen::MatrixXd::Identity(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = j + 1; i < p; ++i) {
            if (adj(i, j) == 0) continue;
            const double v = rng.uniform(low, high);
            omega(i, j) = omega(j, i) = rng.uniform() < 0.5 ? v : -v;
        }
    }
    return omega;
}

/// Smallest-change ridge making cond(omega + lambda I) < limit:
/// (l_max + lambda) / (l_min + lambda) = target with target just below limit.
inline double condition_ridge(const Eigen::VectorXd& eigenvalues, double limit) {
    const double lo = eigenvalues.minCoeff();
    const double hi = eigenvalues.maxCoeff();
    const double target = limit * (1.0 - 1e-6);
    if (lo > 0.0 && hi / lo < target) return 0.0;
    return (hi - target * lo) / (target - 1.0);
}

struct SparsePrecision {
    Eigen::MatrixXd omega; // 2p x 2p joint precision after the ridge
    double ridge = 0.0;
    double condition = 0.0;
    std::size_t attempts = 1;
};

inline SparsePrecision sparse_joint_precision(const SparseModelConfig& cfg, std::size_t replicate = 0) {
    cfg.validate();
    const std::size_t p = cfg.p;
    const auto pp = static_cast<Eigen::Index>(p);
    constexpr std::size_t max_attempts = 11;
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        StreamRng rng(cfg.seed, {1, replicate, attempt});
        const std::size_t changed = cfg.hypothesis == Hypothesis::H1 ? 2 * cfg.h1_block_size : 0;
        const std::size_t shared = p - changed;
        const Eigen::MatrixXd base = weighted_precision(
            block_power_law_graph(shared, cfg.block_size, cfg.cross_probability(), rng), cfg.edge_low,
            cfg.edge_high, rng);
        Eigen::MatrixXd omega1 = Eigen::MatrixXd::Identity(pp, pp);
        Eigen::MatrixXd omega2 = Eigen::MatrixXd::Identity(pp, pp);
        const auto sh = static_cast<Eigen::Index>(shared);
        omega1.topLeftCorner(sh, sh) = base;
        omega2.topLeftCorner(sh, sh) = base;
        if (changed > 0) {
            const auto k = static_cast<Eigen::Index>(cfg.h1_block_size);
            auto block = [&] {
                return weighted_precision(block_power_law_graph(cfg.h1_block_size, cfg.block_size,
                                                                cfg.cross_probability(), rng),
                                          cfg.edge_low, cfg.edge_high, rng);
            };
            omega1.block(sh, sh, k, k) = block();
            omega2.block(sh + k, sh + k, k, k) = block();
        }
        SparsePrecision out;
        out.omega = Eigen::MatrixXd::Zero(2 * pp, 2 * pp);
        out.omega.topLeftCorner(pp, pp) = omega1;
        out.omega.bottomRightCorner(pp, pp) = omega2;
        for (Eigen::Index i = 0; i < pp / 2; ++i) {
            out.omega(i, pp + i) = out.omega(pp + i, i) = cfg.cross_link_value;
        }
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.omega, Eigen::EigenvaluesOnly);
        if (eig.info() != Eigen::Success) continue;
        out.ridge = condition_ridge(eig.eigenvalues(), cfg.condition_limit());
        out.omega.diagonal().array() += out.ridge;
        const Eigen::VectorXd ev = eig.eigenvalues().array() + out.ridge;
        out.condition = ev.maxCoeff() / ev.minCoeff();
        out.attempts = attempt + 1;
        if (ev.minCoeff() > 0.0) return out;
    }
    throw Error("sparse model: could not build a positive definite precision matrix");
}

class SparseModel {
public:
    explicit SparseModel(SparseModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    [[nodiscard]] const SparseModelConfig& config() const noexcept { return cfg_; }

    /// Fresh graph and weights per replicate; (X_k, Y_k) ~ N(0, Omega^-1)
    /// via a triangular solve against the Cholesky factor of Omega.
    [[nodiscard]] PairedDataset sample(std::size_t replicate) const {
        const auto prec = sparse_joint_precision(cfg_, replicate);
        return sample_from(prec.omega, replicate);
    }

    [[nodiscard]] PairedDataset sample_from(const Eigen::MatrixXd& omega, std::size_t replicate) const {
        Eigen::LLT<Eigen::MatrixXd> llt(omega);
        if (llt.info() != Eigen::Success) throw Error("sparse model: Cholesky factorization failed");
        StreamRng rng(cfg_.seed, {2, replicate});
        const auto pp = static_cast<Eigen::Index>(cfg_.p);
        Eigen::MatrixXd zt = detail::standard_normal(2 * cfg_.p, cfg_.n, rng);
        llt.matrixU().solveInPlace(zt);
        Eigen::MatrixXd x = zt.topRows(pp).transpose();
        Eigen::MatrixXd y = zt.bottomRows(pp).transpose();
        return {std::move(x), std::move(y)};
    }

private:
    SparseModelConfig cfg_;
};

inline PairedDataset gen_sparse(const SparseModelConfig& cfg, std::size_t replicate = 0) {
    return SparseModel(cfg).sample(replicate);
}

// ---------------------------------------------------------------- common

using ModelConfig = std::variant<IidModelConfig, DenseModelConfig, SparseModelConfig>;

inline std::string model_name(const ModelConfig& cfg) {
    switch (cfg.index()) {
    case 0: return "iid";
    case 1: return "dense";
    default: return "sparse";
    }
}

inline std::size_t model_n(const ModelConfig& cfg) {
    return std::visit([](const auto& c) { return c.n; }, cfg);
}

inline std::uint64_t model_seed(const ModelConfig& cfg) {
    return std::visit(
        [](const auto& c) -> std::uint64_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(c)>, DenseModelConfig>) return c.base_seed;
            else return c.seed;
        },
        cfg);
}

inline Hypothesis model_hypothesis(const ModelConfig& cfg) {
    if (const auto* d = std::get_if<DenseModelConfig>(&cfg)) return d->hypothesis;
    if (const auto* s = std::get_if<SparseModelConfig>(&cfg)) return s->hypothesis;
    return Hypothesis::H0;
}

/// Thread-safe replicate generator: replicate index -> dataset.
inline std::function<PairedDataset(std::size_t)> make_generator(const ModelConfig& cfg) {
    if (const auto* c = std::get_if<IidModelConfig>(&cfg)) {
        c->validate();
        return [c = *c](std::size_t r) { return gen_iid(c, r); };
    }
    if (const auto* c = std::get_if<DenseModelConfig>(&cfg)) {
        auto model = std::make_shared<const DenseModel>(*c);
        return [model](std::size_t r) { return model->sample(r); };
    }
    const SparseModel model(std::get<SparseModelConfig>(cfg));
    return [model](std::size_t r) { return model.sample(r); };
}

} // namespace corrdiff
