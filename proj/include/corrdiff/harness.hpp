#pragma once

// Per-dataset analysis (every statistic under every null regime) and the
// size / power / uniformity harness over simulated replicates.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/error.hpp"
#include "corrdiff/math.hpp"
#include "corrdiff/null_dist.hpp"
#include "corrdiff/parallel.hpp"
#include "corrdiff/perm_engine.hpp"
#include "corrdiff/sim_models.hpp"
#include "corrdiff/storey.hpp"
#include "corrdiff/test_stats.hpp"
#include "corrdiff/threshold_power.hpp"

namespace corrdiff {

struct AnalysisOptions {
    bool squares = true;
    bool max = true;
    bool exceed = true;
    std::vector<int> ws{0};
    bool ai = true;
    bool ad = true;
    bool np = true;
    std::size_t b_ad = default_b_ad;
    std::size_t b_np = default_b_np;
    double alpha = 0.05;
    std::optional<double> u;              // fixed threshold; selected per dataset otherwise
    std::optional<double> prior_variance; // gamma prior variance; mode^2 by default
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    unsigned threads = 1;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
        if (exceed && ws.empty()) throw ValidationError("exceedance test needs at least one w");
        for (int w : ws) {
            if (w != 0 && w != 1) throw ValidationError("w must be 0 or 1");
        }
        if (u && !(*u >= 0.0 && std::isfinite(*u))) throw ValidationError("u must be finite and >= 0");
        if (ad && b_ad < min_replicates_gumbel) throw ValidationError("AD regime needs B >= 20");
        if (np && b_np < 1) throw ValidationError("NP regime needs B >= 1");
    }
};

inline std::string test_label(StatisticKind kind, int w) {
    if (kind == StatisticKind::Exceedance) return "E" + std::to_string(w);
    return std::string(to_string(kind));
}

struct TestOutcome {
    StatisticKind kind = StatisticKind::Squares;
    int w = 0;
    double u = 0.0;
    NullRegime regime = NullRegime::AI;
    double statistic = 0.0;
    double p_value = std::numeric_limits<double>::quiet_NaN();
    std::string error;

    [[nodiscard]] std::string label() const { return test_label(kind, w); }
    [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

struct DatasetAnalysis {
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t m = 0;
    double rho_hat = 0.0;
    double theta_hat = std::numeric_limits<double>::quiet_NaN();
    std::vector<TestOutcome> outcomes;

    [[nodiscard]] const TestOutcome* find(StatisticKind kind, NullRegime regime, int w = 0) const {
        for (const auto& o : outcomes) {
            if (o.kind == kind && o.regime == regime && (kind != StatisticKind::Exceedance || o.w == w)) return &o;
        }
        return nullptr;
    }
};

/// Two-sided normal p-values of the standardized differences.
inline std::vector<double> difference_pvalues(std::span<const double> d) {
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = math::normal_two_sided(d[i]);
    return out;
}

/// Threshold for T_E on one dataset: rho_s from Storey's pi0 on the
/// per-pair p-values, then select_threshold under the default prior.
inline double dataset_threshold(std::span<const double> d, std::size_t n, int w, double alpha,
                                std::optional<double> prior_variance, double* rho_out = nullptr) {
    const double rho = estimate_rho_s(difference_pvalues(d));
    if (rho_out) *rho_out = rho;
    const auto prior = GammaPrior::from_mode(n, alpha, prior_variance);
    return select_threshold(n, d.size(), rho, w, prior, alpha).u;
}

inline DatasetAnalysis analyze_dataset(const PairedDataset& data, const AnalysisOptions& opt) {
    opt.validate();
    DatasetAnalysis out;
    out.n = data.n();
    out.p = data.p();
    const auto diff = standardized_differences(data);
    const std::vector<double>& d = diff.d;
    out.m = d.size();

    struct Planned {
        StatisticKind kind;
        ExceedanceConfig cfg;
        double observed;
    };
    std::vector<Planned> plan;
    if (opt.squares) plan.push_back({StatisticKind::Squares, {}, t_squares(d).value});
    if (opt.max) plan.push_back({StatisticKind::Max, {}, t_max(d).value});
    std::vector<ExceedanceConfig> cfgs;
    if (opt.exceed) {
        for (int w : opt.ws) {
            const double u = opt.u ? *opt.u : dataset_threshold(d, out.n, w, opt.alpha, opt.prior_variance, &out.rho_hat);
            const ExceedanceConfig cfg{u, w};
            cfgs.push_back(cfg);
            plan.push_back({StatisticKind::Exceedance, cfg, t_exceed(d, cfg).value});
        }
    }

    auto record = [&](const Planned& t, NullRegime regime, auto&& compute) {
        TestOutcome o;
        o.kind = t.kind;
        o.w = t.cfg.w;
        o.u = t.cfg.u;
        o.regime = regime;
        o.statistic = t.observed;
        try {
            o.p_value = compute();
        } catch (const Error& e) {
            o.error = e.what();
        }
        out.outcomes.push_back(std::move(o));
    };

    if (opt.ai) {
        for (const auto& t : plan) {
            record(t, NullRegime::AI, [&] {
                switch (t.kind) {
                case StatisticKind::Squares: return squares_pvalue(t.observed, SquaresNull::asymptotic(out.m));
                case StatisticKind::Max: return gumbel_pvalue(t.observed, GumbelNull::asymptotic(out.m));
                default: return exceedance_pvalue(t.observed, exceedance_null_ai(out.m, t.cfg));
                }
            });
        }
    }
    if (!opt.ad && !opt.np) return out;

    // One replicate stream: AD uses its first b_ad replicates, NP all b_np.
    const std::size_t b = std::max(opt.ad ? opt.b_ad : 0, opt.np ? opt.b_np : 0);
    const auto reps = permutation_summaries(data, b, opt.seed, cfgs, opt.threads, opt.stream);

    if (opt.ad) {
        const auto head = reps.b() == opt.b_ad ? reps : reps.head(opt.b_ad);
        std::optional<GumbelFit> gumbel;
        try {
            gumbel = fit_gumbel_null(head);
            out.theta_hat = gumbel->theta;
        } catch (const Error&) {
        }
        for (const auto& t : plan) {
            record(t, NullRegime::AD, [&] {
                switch (t.kind) {
                case StatisticKind::Squares:
                    return squares_pvalue(t.observed, estimate_squares_params(head).null(out.m));
                case StatisticKind::Max:
                    if (!gumbel) gumbel = fit_gumbel_null(head);
                    return gumbel_pvalue(t.observed, gumbel->null());
                default: return exceedance_pvalue(t.observed, exceedance_null_ad(out.m, t.cfg, head.exceedance(t.cfg)));
                }
            });
        }
    }
    if (opt.np) {
        const auto squares = reps.t_squares();
        for (const auto& t : plan) {
            record(t, NullRegime::NP, [&] {
                switch (t.kind) {
                case StatisticKind::Squares: return empirical_pvalue(t.observed, squares);
                case StatisticKind::Max: return empirical_pvalue(t.observed, reps.max_abs);
                default: return empirical_pvalue(t.observed, reps.exceedance(t.cfg));
                }
            });
        }
    }
    return out;
}

// ---------------------------------------------------------------- harness

struct HarnessRow {
    std::string test;
    StatisticKind kind = StatisticKind::Squares;
    int w = 0;
    NullRegime regime = NullRegime::AI;
    double rejection_rate = 0.0;
    double ks_p = std::numeric_limits<double>::quiet_NaN();
    double mean_u = 0.0;
    std::size_t failures = 0;
    std::vector<double> pvalues; // per replicate, NaN where the test failed
};

struct HarnessReport {
    std::string model;
    Hypothesis hypothesis = Hypothesis::H0;
    double alpha = 0.05;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    double mean_theta_hat = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> theta_hats;
    std::vector<HarnessRow> rows;

    [[nodiscard]] const HarnessRow& row(StatisticKind kind, NullRegime regime, int w = 0) const {
        for (const auto& r : rows) {
            if (r.kind == kind && r.regime == regime && (kind != StatisticKind::Exceedance || r.w == w)) return r;
        }
        throw ValidationError("harness report has no row for " + test_label(kind, w) + "(" +
                              std::string(to_string(regime)) + ")");
    }
};

inline constexpr std::size_t min_harness_reps = 100;

/// Runs analyze_dataset on `reps` replicates of the model (replicates in
/// parallel, each single-threaded) and aggregates rejection rates at alpha.
inline HarnessReport run_harness(const ModelConfig& model, AnalysisOptions opt, std::size_t reps,
                                 unsigned threads = 0) {
    if (reps < min_harness_reps) throw ValidationError("run_harness: need reps >= 100");
    opt.validate();
    const auto generate = make_generator(model);
    std::vector<DatasetAnalysis> results(reps);
    const auto base_seed = opt.seed;
    opt.threads = 1;
    parallel_for(reps, threads, [&](std::size_t r) {
        AnalysisOptions local = opt;
        local.stream = r;
        local.seed = derive_key(base_seed, {3});
        results[r] = analyze_dataset(generate(r), local);
    });

    HarnessReport report;
    report.model = model_name(model);
    report.hypothesis = model_hypothesis(model);
    report.alpha = opt.alpha;
    report.reps = reps;
    report.seed = model_seed(model);
    for (const auto& res : results) {
        if (std::isfinite(res.theta_hat)) report.theta_hats.push_back(res.theta_hat);
    }
    if (!report.theta_hats.empty()) report.mean_theta_hat = math::mean(report.theta_hats);

    for (std::size_t k = 0; k < results.front().outcomes.size(); ++k) {
        const auto& proto = results.front().outcomes[k];
        HarnessRow row;
        row.test = proto.label();
        row.kind = proto.kind;
        row.w = proto.w;
        row.regime = proto.regime;
        std::vector<double> valid, us;
        std::size_t rejected = 0;
        for (const auto& res : results) {
            const auto& o = res.outcomes[k];
            row.pvalues.push_back(o.p_value);
            us.push_back(o.u);
            if (!o.ok() || !std::isfinite(o.p_value)) {
                ++row.failures;
                continue;
            }
            valid.push_back(o.p_value);
            rejected += o.p_value <= opt.alpha ? 1 : 0;
        }
        row.mean_u = math::mean(us);
        if (!valid.empty()) {
            row.rejection_rate = static_cast<double>(rejected) / static_cast<double>(valid.size());
            row.ks_p = math::ks_uniform(valid).p_value;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace detail {
inline std::string fmt_or_na(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
} // namespace detail

/// Columns: model, test, regime, size, power, ks_p, theta_hat, reps, seed.
inline void write_harness_tsv(std::ostream& os, const std::vector<HarnessReport>& reports, bool header = true) {
    if (header) os << "model\ttest\tregime\tsize\tpower\tks_p\ttheta_hat\treps\tseed\n";
    for (const auto& rep : reports) {
        for (const auto& row : rep.rows) {
            const bool h0 = rep.hypothesis == Hypothesis::H0;
            os << rep.model << '\t' << row.test << '\t' << to_string(row.regime) << '\t'
               << (h0 ? detail::fmt_or_na(row.rejection_rate) : "NA") << '\t'
               << (h0 ? "NA" : detail::fmt_or_na(row.rejection_rate)) << '\t' << detail::fmt_or_na(row.ks_p)
               << '\t' << detail::fmt_or_na(rep.mean_theta_hat) << '\t' << rep.reps << '\t' << rep.seed << '\n';
        }
    }
}

} // namespace corrdiff
