#pragma once

// Labelled synthetic batches in the pipeline's input shape, plus writers
// for the three input files.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "corrdiff/error.hpp"
#include "corrdiff/random.hpp"
#include "corrdiff/sim_models.hpp"
#include "corrdiff/pipeline/io.hpp"

namespace corrdiff::pipeline {

struct SyntheticBatchConfig {
    std::string model = "sparse"; // sparse | dense | iid
    std::size_t sets = 50;
    std::size_t genes_per_set = 40;
    std::size_t n = 100;
    double h1_fraction = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (model != "sparse" && model != "dense" && model != "iid") {
            throw ValidationError("synthetic batch: unknown model '" + model + "'");
        }
        if (sets < 1) throw ValidationError("synthetic batch: need at least one set");
        if (!(h1_fraction >= 0.0 && h1_fraction <= 1.0)) {
            throw ValidationError("synthetic batch: h1 fraction must lie in [0, 1]");
        }
        if (model == "iid" && h1_fraction > 0.0) throw ValidationError("synthetic batch: iid model has no alternative");
    }
};

struct SyntheticBatch {
    ExpressionTable table;
    GeneSetCollection collection;
    std::vector<bool> h1; // per set
};

/// Set k is an alternative when floor((k+1) f) > floor(k f), which spreads
/// round(sets f) alternatives evenly through the batch.
inline bool synthetic_is_h1(std::size_t k, double fraction) {
    return std::floor(static_cast<double>(k + 1) * fraction + 1e-9) > std::floor(static_cast<double>(k) * fraction + 1e-9);
}

inline ModelConfig synthetic_set_model(const SyntheticBatchConfig& cfg, std::size_t k) {
    const Hypothesis hyp = synthetic_is_h1(k, cfg.h1_fraction) ? Hypothesis::H1 : Hypothesis::H0;
    const std::uint64_t seed = derive_key(cfg.seed, {4, k});
    if (cfg.model == "iid") return IidModelConfig{cfg.genes_per_set, cfg.n, seed};
    if (cfg.model == "dense") {
        DenseModelConfig d;
        d.p = cfg.genes_per_set;
        d.n = cfg.n;
        d.hypothesis = hyp;
        d.base_seed = seed;
        const std::size_t small = std::max<std::size_t>(1, d.p / 5);
        d.block_sizes = {d.p - small, small};
        return d;
    }
    SparseModelConfig s;
    s.p = cfg.genes_per_set;
    s.n = cfg.n;
    s.hypothesis = hyp;
    s.seed = seed;
    // Small sets get smaller D blocks so the alternative still fits.
    if (s.p >= 6) s.h1_block_size = std::min(s.h1_block_size, (s.p - 2) / 2);
    return s;
}

/// Disjoint sets of genes "S<k>_G<j>"; patients "P<i>"; samples
/// "P<i>_I" and "P<i>_II".
inline SyntheticBatch make_synthetic_batch(const SyntheticBatchConfig& cfg) {
    cfg.validate();
    SyntheticBatch out;
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto p = static_cast<Eigen::Index>(cfg.genes_per_set * cfg.sets);
    out.table.x.resize(n, p);
    out.table.y.resize(n, p);
    for (std::size_t i = 0; i < cfg.n; ++i) out.table.patients.push_back("P" + std::to_string(i + 1));
    out.collection.source = "synthetic";
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < cfg.sets; ++k) {
        const auto model = synthetic_set_model(cfg, k);
        const auto data = make_generator(model)(0);
        GeneSet set;
        set.name = "SET_" + std::to_string(k + 1);
        set.description = std::string(model_name(model)) + "_" + to_string(model_hypothesis(model));
        for (Eigen::Index j = 0; j < data.x.cols(); ++j, ++col) {
            const auto gene = "S" + std::to_string(k + 1) + "_G" + std::to_string(j + 1);
            out.table.genes.push_back(gene);
            set.genes.push_back(gene);
            out.table.x.col(col) = data.x.col(j);
            out.table.y.col(col) = data.y.col(j);
        }
        out.collection.sets.push_back(std::move(set));
        out.h1.push_back(model_hypothesis(model) == Hypothesis::H1);
    }
    return out;
}

namespace detail {
inline std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_expression_tsv(std::ostream& os, const ExpressionTable& t) {
    os << "gene";
    for (const auto& pid : t.patients) os << '\t' << pid << "_I";
    for (const auto& pid : t.patients) os << '\t' << pid << "_II";
    os << '\n';
    for (std::size_t j = 0; j < t.p(); ++j) {
        os << t.genes[j];
        const auto c = static_cast<Eigen::Index>(j);
        for (Eigen::Index i = 0; i < t.x.rows(); ++i) os << '\t' << detail::exact(t.x(i, c));
        for (Eigen::Index i = 0; i < t.y.rows(); ++i) os << '\t' << detail::exact(t.y(i, c));
        os << '\n';
    }
}

inline void write_pairing_tsv(std::ostream& os, const ExpressionTable& t) {
    os << "sample_id\tpatient_id\tcondition\n";
    for (const auto& pid : t.patients) os << pid << "_I\t" << pid << "\tI\n" << pid << "_II\t" << pid << "\tII\n";
}

inline void write_gmt(std::ostream& os, const GeneSetCollection& c) {
    for (const auto& s : c.sets) {
        os << s.name << '\t' << s.description;
        for (const auto& g : s.genes) os << '\t' << g;
        os << '\n';
    }
}

/// Writes expression.tsv, pairs.tsv, sets.gmt and labels.tsv into dir.
inline void write_synthetic_batch(const std::string& dir, const SyntheticBatch& b) {
    auto open = [&](const std::string& name) {
        std::ofstream os(dir + "/" + name);
        if (!os) throw ValidationError("cannot write " + dir + "/" + name);
        return os;
    };
    auto e = open("expression.tsv");
    write_expression_tsv(e, b.table);
    auto p = open("pairs.tsv");
    write_pairing_tsv(p, b.table);
    auto g = open("sets.gmt");
    write_gmt(g, b.collection);
    auto l = open("labels.tsv");
    l << "id\thypothesis\n";
    for (std::size_t k = 0; k < b.h1.size(); ++k) l << b.collection.sets[k].name << '\t' << (b.h1[k] ? "H1" : "H0") << '\n';
}

} // namespace corrdiff::pipeline
