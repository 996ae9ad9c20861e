#pragma once

// Gene-set batch testing: one analysis per set, FDR across sets.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "corrdiff/error.hpp"
#include "corrdiff/harness.hpp"
#include "corrdiff/parallel.hpp"
#include "corrdiff/pipeline/fdr.hpp"
#include "corrdiff/pipeline/io.hpp"

namespace corrdiff::pipeline {

inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

struct BatchConfig {
    bool squares = true;
    bool max = true;
    bool exceed = true;
    NullRegime regime = NullRegime::AD;
    std::optional<std::size_t> b; // permutations; 200 (AD) or 1000 (NP) by default
    double alpha = 0.05;
    int w = 0;
    std::optional<double> u; // auto-selected per set when empty
    std::optional<double> prior_variance;
    FdrMethod fdr = FdrMethod::BH;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::size_t min_genes = 5;

    [[nodiscard]] std::size_t replicates() const {
        if (b) return *b;
        return regime == NullRegime::NP ? default_b_np : default_b_ad;
    }

    [[nodiscard]] AnalysisOptions analysis_options() const {
        AnalysisOptions opt;
        opt.squares = squares;
        opt.max = max;
        opt.exceed = exceed;
        opt.ws = {w};
        opt.ai = regime == NullRegime::AI;
        opt.ad = regime == NullRegime::AD;
        opt.np = regime == NullRegime::NP;
        opt.b_ad = replicates();
        opt.b_np = replicates();
        opt.alpha = alpha;
        opt.u = u;
        opt.prior_variance = prior_variance;
        opt.seed = seed;
        return opt;
    }

    void validate() const {
        if (!squares && !max && !exceed) throw ValidationError("no tests selected");
        if (min_genes < 2) throw ValidationError("minimum gene-set size must be >= 2");
        if (regime != NullRegime::AI && replicates() < 1) throw ValidationError("B must be >= 1");
        analysis_options().validate();
    }
};

struct PathwayResult {
    std::size_t index = 0;
    std::string id;
    std::size_t p_genes = 0;
    bool tested = false;
    std::string skip_reason;
    std::string error;
    double stat_s = nan, p_s = nan;
    double stat_m = nan, p_m = nan;
    double stat_e = nan, u_used = nan, p_e = nan;
    double q_s = nan, q_m = nan, q_e = nan;
    double theta_hat = nan;
    double runtime_seconds = 0.0;
};

struct BatchResult {
    BatchConfig config;
    std::size_t n = 0;
    std::vector<PathwayResult> rows; // input order
    std::vector<std::string> log;
};

namespace detail {

inline void analyze_set(const ExpressionTable& table, const std::vector<std::size_t>& cols, const BatchConfig& cfg,
                        unsigned threads, PathwayResult& row) {
    const auto start = std::chrono::steady_clock::now();
    try {
        auto opt = cfg.analysis_options();
        opt.stream = row.index;
        opt.threads = threads;
        const auto res = analyze_dataset(table.subset(cols), opt);
        row.theta_hat = res.theta_hat;
        std::string errors;
        for (const auto& o : res.outcomes) {
            if (!o.ok()) errors += (errors.empty() ? "" : "; ") + o.label() + ": " + o.error;
            switch (o.kind) {
            case StatisticKind::Squares:
                row.stat_s = o.statistic;
                row.p_s = o.p_value;
                break;
            case StatisticKind::Max:
                row.stat_m = o.statistic;
                row.p_m = o.p_value;
                break;
            case StatisticKind::Exceedance:
                row.stat_e = o.statistic;
                row.u_used = o.u;
                row.p_e = o.p_value;
                break;
            }
        }
        row.error = errors;
    } catch (const Error& e) {
        row.error = e.what();
    }
    row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// Runs every set with at least min_genes genes present in the table.
/// Sets are scheduled largest-first; rows come back in input order and
/// depend only on (inputs, seed, B), never on the thread count.
inline BatchResult run_batch(const ExpressionTable& table, const GeneSetCollection& collection,
                             const BatchConfig& cfg) {
    cfg.validate();
    BatchResult out;
    out.config = cfg;
    out.n = table.n();
    out.rows.resize(collection.sets.size());
    std::vector<std::vector<std::size_t>> columns(collection.sets.size());
    std::vector<std::size_t> runnable;
    for (std::size_t k = 0; k < collection.sets.size(); ++k) {
        const auto& set = collection.sets[k];
        auto& row = out.rows[k];
        row.index = k;
        row.id = set.name;
        for (const auto& g : set.genes) {
            if (auto j = table.gene_index(g)) columns[k].push_back(*j);
        }
        std::sort(columns[k].begin(), columns[k].end());
        row.p_genes = columns[k].size();
        if (row.p_genes < cfg.min_genes) {
            row.skip_reason = std::to_string(row.p_genes) + " of " + std::to_string(set.genes.size()) +
                              " genes found in the expression table (need >= " + std::to_string(cfg.min_genes) + ")";
            out.log.push_back("skipped " + set.name + ": " + row.skip_reason);
            continue;
        }
        row.tested = true;
        runnable.push_back(k);
    }
    std::stable_sort(runnable.begin(), runnable.end(),
                     [&](std::size_t a, std::size_t b) { return out.rows[a].p_genes > out.rows[b].p_genes; });

    const unsigned total = resolve_threads(cfg.threads);
    const unsigned outer = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(total, runnable.size())));
    const unsigned inner = std::max(1u, total / outer);
    parallel_for(runnable.size(), outer, [&](std::size_t i) {
        const auto k = runnable[i];
        detail::analyze_set(table, columns[k], cfg, inner, out.rows[k]);
    });

    auto adjust = [&](double PathwayResult::*p, double PathwayResult::*q) {
        std::vector<double> ps;
        for (const auto& r : out.rows) ps.push_back(r.tested ? r.*p : nan);
        const auto qs = fdr_adjust(ps, cfg.fdr);
        for (std::size_t k = 0; k < out.rows.size(); ++k) out.rows[k].*q = qs[k];
    };
    adjust(&PathwayResult::p_s, &PathwayResult::q_s);
    adjust(&PathwayResult::p_m, &PathwayResult::q_m);
    adjust(&PathwayResult::p_e, &PathwayResult::q_e);
    for (const auto& r : out.rows) {
        if (!r.error.empty()) out.log.push_back("error in " + r.id + ": " + r.error);
    }
    return out;
}

namespace detail {
inline std::string fmt(double v) {
    if (std::isnan(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}
} // namespace detail

/// One row per tested set:
/// id, p_genes, stat_s, p_s, stat_m, p_m, stat_e, u_used, p_e, q_s, q_m, q_e.
inline void write_results_tsv(std::ostream& os, const BatchResult& res) {
    os << "id\tp_genes\tstat_s\tp_s\tstat_m\tp_m\tstat_e\tu_used\tp_e\tq_s\tq_m\tq_e\n";
    using detail::fmt;
    for (const auto& r : res.rows) {
        if (!r.tested) continue;
        os << r.id << '\t' << r.p_genes << '\t' << fmt(r.stat_s) << '\t' << fmt(r.p_s) << '\t' << fmt(r.stat_m)
           << '\t' << fmt(r.p_m) << '\t' << fmt(r.stat_e) << '\t' << fmt(r.u_used) << '\t' << fmt(r.p_e) << '\t'
           << fmt(r.q_s) << '\t' << fmt(r.q_m) << '\t' << fmt(r.q_e) << '\n';
    }
}

} // namespace corrdiff::pipeline
