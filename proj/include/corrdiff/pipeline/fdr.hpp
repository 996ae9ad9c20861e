#pragma once

// Step-up FDR adjustment (Benjamini-Hochberg and Benjamini-Yekutieli).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "corrdiff/error.hpp"

namespace corrdiff::pipeline {

enum class FdrMethod { BH, BY };

inline FdrMethod parse_fdr_method(const std::string& s) {
    if (s == "bh" || s == "BH") return FdrMethod::BH;
    if (s == "by" || s == "BY") return FdrMethod::BY;
    throw ValidationError("unknown FDR method '" + s + "' (expected bh or by)");
}

inline std::string to_string(FdrMethod m) { return m == FdrMethod::BH ? "bh" : "by"; }

/// Adjusted p-values q_(i) = min_{j >= i} min(1, c m p_(j) / j), c = 1 for
/// BH and sum_{k<=m} 1/k for BY. NaN entries stay NaN and do not count
/// toward m.
inline std::vector<double> fdr_adjust(std::span<const double> pvalues, FdrMethod method = FdrMethod::BH) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pvalues.size(); ++i) {
        const double p = pvalues[i];
        if (std::isnan(p)) continue;
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fdr_adjust: p-values must lie in [0, 1]");
        idx.push_back(i);
    }
    std::vector<double> out(pvalues.size(), std::numeric_limits<double>::quiet_NaN());
    const std::size_t m = idx.size();
    if (m == 0) return out;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    double c = 1.0;
    if (method == FdrMethod::BY) {
        c = 0.0;
        for (std::size_t k = 1; k <= m; ++k) c += 1.0 / static_cast<double>(k);
    }
    double running = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const double q = c * static_cast<double>(m) * pvalues[idx[r]] / static_cast<double>(r + 1);
        running = std::min(running, std::min(1.0, q));
        out[idx[r]] = running;
    }
    return out;
}

} // namespace corrdiff::pipeline
