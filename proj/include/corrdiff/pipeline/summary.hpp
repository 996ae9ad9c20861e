#pragma once

// Cross-test concordance report for a finished batch.

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrdiff/math.hpp"
#include "corrdiff/pipeline/batch.hpp"

namespace corrdiff::pipeline {

struct TestSummary {
    std::string test; // "S", "M" or "E"
    std::size_t tested = 0;
    std::size_t significant_raw = 0; // p < level
    std::size_t significant_adj = 0; // q < q_level
};

struct PairCorrelation {
    std::string a, b;
    std::size_t pairs = 0;
    double pearson = nan; // NaN with fewer than 3 pairs or a constant vector
};

struct BatchSummary {
    double level = 0.01;
    double q_level = 0.05;
    std::size_t sets_total = 0;
    std::size_t sets_tested = 0;
    std::size_t sets_skipped = 0;
    std::size_t sets_failed = 0;
    std::vector<TestSummary> tests;
    std::size_t all_three_raw = 0;
    std::size_t all_three_adj = 0;
    std::vector<PairCorrelation> correlations;
};

namespace detail {

inline double pearson_or_nan(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 3) return nan;
    try {
        const double r = math::pearson(a, b);
        return std::isfinite(r) ? r : nan;
    } catch (const Error&) {
        return nan;
    }
}

inline bool below(double v, double level) { return !std::isnan(v) && v < level; }

} // namespace detail

inline BatchSummary summarize(const BatchResult& res, double level = 0.01, double q_level = 0.05) {
    BatchSummary s;
    s.level = level;
    s.q_level = q_level;
    s.sets_total = res.rows.size();
    const std::array<const char*, 3> names{"S", "M", "E"};
    const std::array<double PathwayResult::*, 3> p{&PathwayResult::p_s, &PathwayResult::p_m, &PathwayResult::p_e};
    const std::array<double PathwayResult::*, 3> q{&PathwayResult::q_s, &PathwayResult::q_m, &PathwayResult::q_e};
    const std::array<bool, 3> on{res.config.squares, res.config.max, res.config.exceed};
    for (std::size_t t = 0; t < 3; ++t) {
        if (on[t]) s.tests.push_back({names[t]});
    }
    for (const auto& r : res.rows) {
        if (!r.tested) {
            ++s.sets_skipped;
            continue;
        }
        ++s.sets_tested;
        if (!r.error.empty()) ++s.sets_failed;
        bool raw_all = true, adj_all = true;
        std::size_t k = 0;
        for (std::size_t t = 0; t < 3; ++t) {
            if (!on[t]) continue;
            auto& ts = s.tests[k++];
            if (!std::isnan(r.*p[t])) ++ts.tested;
            const bool raw = detail::below(r.*p[t], level);
            const bool adj = detail::below(r.*q[t], q_level);
            ts.significant_raw += raw;
            ts.significant_adj += adj;
            raw_all = raw_all && raw;
            adj_all = adj_all && adj;
        }
        if (s.tests.size() == 3) {
            s.all_three_raw += raw_all;
            s.all_three_adj += adj_all;
        }
    }
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            if (!on[a] || !on[b]) continue;
            std::vector<double> va, vb;
            for (const auto& r : res.rows) {
                if (!r.tested || std::isnan(r.*p[a]) || std::isnan(r.*p[b])) continue;
                va.push_back(r.*p[a]);
                vb.push_back(r.*p[b]);
            }
            s.correlations.push_back({names[a], names[b], va.size(), detail::pearson_or_nan(va, vb)});
        }
    }
    return s;
}

namespace detail {
inline nlohmann::ordered_json number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}
} // namespace detail

/// Full JSON report. Holds nothing run-dependent (no timings, no thread
/// count) so it is byte-identical for fixed inputs, seed and B.
inline nlohmann::ordered_json summary_json(const BatchResult& res, const BatchSummary& s) {
    using nlohmann::ordered_json;
    const auto& c = res.config;
    ordered_json cfg;
    std::string tests;
    if (c.squares) tests += "s";
    if (c.max) tests += tests.empty() ? "m" : ",m";
    if (c.exceed) tests += tests.empty() ? "e" : ",e";
    cfg["tests"] = tests;
    cfg["null"] = std::string(to_string(c.regime));
    cfg["B"] = c.regime == NullRegime::AI ? ordered_json(nullptr) : ordered_json(c.replicates());
    cfg["alpha"] = c.alpha;
    cfg["w"] = c.w;
    cfg["u"] = c.u ? ordered_json(*c.u) : ordered_json("auto");
    cfg["fdr"] = to_string(c.fdr);
    cfg["seed"] = c.seed;
    cfg["min_genes"] = c.min_genes;

    ordered_json j;
    j["config"] = cfg;
    j["n"] = res.n;
    j["sets"] = {{"total", s.sets_total}, {"tested", s.sets_tested}, {"skipped", s.sets_skipped},
                 {"failed", s.sets_failed}};
    j["level"] = s.level;
    j["q_level"] = s.q_level;
    ordered_json tj = ordered_json::array();
    for (const auto& t : s.tests) {
        tj.push_back({{"test", t.test},
                      {"tested", t.tested},
                      {"significant_raw", t.significant_raw},
                      {"significant_adjusted", t.significant_adj}});
    }
    j["tests"] = tj;
    if (s.tests.size() == 3) {
        j["all_three_raw"] = s.all_three_raw;
        j["all_three_adjusted"] = s.all_three_adj;
    }
    ordered_json cj = ordered_json::array();
    for (const auto& pc : s.correlations) {
        cj.push_back({{"tests", pc.a + "-" + pc.b}, {"pairs", pc.pairs}, {"pearson", detail::number_or_null(pc.pearson)}});
    }
    j["pvalue_correlations"] = cj;
    ordered_json skipped = ordered_json::array(), errors = ordered_json::array();
    for (const auto& r : res.rows) {
        if (!r.tested) skipped.push_back({{"id", r.id}, {"reason", r.skip_reason}});
        else if (!r.error.empty()) errors.push_back({{"id", r.id}, {"error", r.error}});
    }
    j["skipped"] = skipped;
    j["errors"] = errors;
    return j;
}

/// Flat key/value TSV of the same counts.
inline void write_summary_tsv(std::ostream& os, const BatchSummary& s) {
    os << "key\tvalue\n";
    os << "sets_total\t" << s.sets_total << "\nsets_tested\t" << s.sets_tested << "\nsets_skipped\t"
       << s.sets_skipped << "\nsets_failed\t" << s.sets_failed << '\n';
    for (const auto& t : s.tests) {
        os << "significant_raw_" << t.test << '\t' << t.significant_raw << '\n';
        os << "significant_adjusted_" << t.test << '\t' << t.significant_adj << '\n';
    }
    if (s.tests.size() == 3) {
        os << "all_three_raw\t" << s.all_three_raw << "\nall_three_adjusted\t" << s.all_three_adj << '\n';
    }
    for (const auto& pc : s.correlations) {
        os << "pearson_" << pc.a << '_' << pc.b << '\t' << detail::fmt(pc.pearson) << '\n';
    }
}

} // namespace corrdiff::pipeline
