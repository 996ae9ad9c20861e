#pragma once

// Expression table / pairing ingest and GMT gene-set parsing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "corrdiff/corr_core.hpp"
#include "corrdiff/error.hpp"

namespace corrdiff::pipeline {

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

inline std::ifstream open_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return in;
}

inline double parse_value(const std::string& cell, std::size_t line_no) {
    const std::string t = trim(cell);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
        throw ValidationError("expression line " + std::to_string(line_no) + ": invalid value '" + cell + "'");
    }
    return v;
}

} // namespace detail

/// Paired expression data: rows are patients, columns genes; x holds
/// condition I and y condition II, aligned by patient.
struct ExpressionTable {
    std::vector<std::string> genes;
    std::vector<std::string> patients;
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t n() const noexcept { return patients.size(); }
    [[nodiscard]] std::size_t p() const noexcept { return genes.size(); }

    [[nodiscard]] std::optional<std::size_t> gene_index(const std::string& gene) const {
        if (index_.size() != genes.size()) {
            index_.clear();
            for (std::size_t j = 0; j < genes.size(); ++j) index_.emplace(genes[j], j);
        }
        const auto it = index_.find(gene);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Paired dataset restricted to the given columns, in the given order.
    [[nodiscard]] PairedDataset subset(const std::vector<std::size_t>& cols) const {
        const auto nn = static_cast<Eigen::Index>(n());
        Eigen::MatrixXd sx(nn, static_cast<Eigen::Index>(cols.size()));
        Eigen::MatrixXd sy(nn, static_cast<Eigen::Index>(cols.size()));
        std::vector<std::string> ids;
        for (std::size_t k = 0; k < cols.size(); ++k) {
            sx.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(cols[k]));
            sy.col(static_cast<Eigen::Index>(k)) = y.col(static_cast<Eigen::Index>(cols[k]));
            ids.push_back(genes[cols[k]]);
        }
        return {std::move(sx), std::move(sy), std::move(ids)};
    }

private:
    mutable std::unordered_map<std::string, std::size_t> index_;
};

struct SamplePairing {
    std::string sample;
    std::string patient;
    int condition = 1; // 1 = I, 2 = II
};

inline int parse_condition(const std::string& label, std::size_t line_no) {
    const std::string t = detail::trim(label);
    if (t == "I" || t == "1") return 1;
    if (t == "II" || t == "2") return 2;
    throw ValidationError("pairing line " + std::to_string(line_no) + ": unknown condition label '" + label +
                          "' (expected I or II)");
}

/// Pairing TSV: sample_id, patient_id, condition. A header row starting
/// with "sample_id" is skipped.
inline std::vector<SamplePairing> read_pairing(std::istream& in) {
    std::vector<SamplePairing> out;
    std::string line;
    std::size_t line_no = 0;
    while (detail::read_line(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_tabs(line);
        if (line_no == 1 && detail::trim(f[0]) == "sample_id") continue;
        if (f.size() < 3) {
            throw ValidationError("pairing line " + std::to_string(line_no) +
                                  ": expected sample_id, patient_id, condition");
        }
        out.push_back({detail::trim(f[0]), detail::trim(f[1]), parse_condition(f[2], line_no)});
    }
    return out;
}

/// Builds the paired table. Rows sharing a gene id are averaged; patients
/// keep their first-appearance order in the pairing file.
inline ExpressionTable ingest(std::istream& expr, std::istream& pairs) {
    const auto pairing = read_pairing(pairs);
    std::string line;
    if (!detail::read_line(expr, line)) throw ValidationError("expression file is empty");
    const auto header = detail::split_tabs(line);
    if (header.size() < 2) throw ValidationError("expression header must list sample ids after the gene column");
    std::unordered_map<std::string, std::size_t> sample_col;
    for (std::size_t k = 1; k < header.size(); ++k) {
        const auto id = detail::trim(header[k]);
        if (!sample_col.emplace(id, k - 1).second) throw ValidationError("duplicate sample id in header: " + id);
    }

    ExpressionTable table;
    // Patient -> (column of I, column of II).
    std::map<std::string, std::pair<std::optional<std::size_t>, std::optional<std::size_t>>> slots;
    std::vector<std::string> order;
    std::unordered_set<std::string> seen_samples;
    std::vector<std::string> missing_samples;
    for (const auto& s : pairing) {
        if (!seen_samples.insert(s.sample).second) throw ValidationError("sample listed twice in pairing: " + s.sample);
        auto [it, fresh] = slots.try_emplace(s.patient);
        if (fresh) order.push_back(s.patient);
        auto& slot = s.condition == 1 ? it->second.first : it->second.second;
        if (slot) {
            throw ValidationError("patient " + s.patient + " has more than one sample for condition " +
                                  (s.condition == 1 ? "I" : "II"));
        }
        const auto col = sample_col.find(s.sample);
        if (col == sample_col.end()) {
            missing_samples.push_back(s.sample + " (patient " + s.patient + ")");
            continue;
        }
        slot = col->second;
    }
    if (!missing_samples.empty()) {
        std::string msg = "pairing lists samples absent from the expression header:";
        for (const auto& s : missing_samples) msg += " " + s;
        throw ValidationError(msg);
    }
    std::vector<std::string> unpaired;
    for (const auto& pid : order) {
        const auto& slot = slots[pid];
        if (!slot.first || !slot.second) unpaired.push_back(pid);
    }
    if (!unpaired.empty()) {
        std::string msg = "unpaired patients (need one sample per condition):";
        for (const auto& pid : unpaired) msg += " " + pid;
        throw ValidationError(msg);
    }
    for (const auto& [id, col] : sample_col) {
        if (!seen_samples.count(id)) table.warnings.push_back("sample " + id + " is not in the pairing file; ignored");
    }
    std::sort(table.warnings.begin(), table.warnings.end());

    // Read rows, accumulating duplicates.
    std::vector<std::string> genes;
    std::unordered_map<std::string, std::size_t> gene_row;
    std::vector<std::vector<double>> sums;
    std::vector<std::size_t> counts;
    std::size_t line_no = 1;
    const std::size_t width = header.size() - 1;
    while (detail::read_line(expr, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_tabs(line);
        if (f.size() != header.size()) {
            throw ValidationError("expression line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        }
        const auto gene = detail::trim(f[0]);
        if (gene.empty()) throw ValidationError("expression line " + std::to_string(line_no) + ": empty gene id");
        auto [it, fresh] = gene_row.try_emplace(gene, genes.size());
        if (fresh) {
            genes.push_back(gene);
            sums.emplace_back(width, 0.0);
            counts.push_back(0);
        }
        auto& row = sums[it->second];
        for (std::size_t k = 0; k < width; ++k) row[k] += detail::parse_value(f[k + 1], line_no);
        ++counts[it->second];
    }
    if (genes.empty()) throw ValidationError("expression file has no gene rows");

    const auto n = static_cast<Eigen::Index>(order.size());
    const auto p = static_cast<Eigen::Index>(genes.size());
    table.genes = std::move(genes);
    table.patients = order;
    table.x.resize(n, p);
    table.y.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double c = static_cast<double>(counts[static_cast<std::size_t>(j)]);
        const auto& row = sums[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& slot = slots[order[static_cast<std::size_t>(i)]];
            table.x(i, j) = row[*slot.first] / c;
            table.y(i, j) = row[*slot.second] / c;
        }
    }
    return table;
}

inline ExpressionTable ingest(const std::string& expr_path, const std::string& pairs_path) {
    auto expr = detail::open_file(expr_path);
    auto pairs = detail::open_file(pairs_path);
    return ingest(expr, pairs);
}

// -------------------------------------------------------------------- GMT

struct GeneSet {
    std::string name;
    std::string description;
    std::vector<std::string> genes; // deduplicated, first-appearance order
};

struct GeneSetCollection {
    std::string source;
    std::vector<GeneSet> sets;
    std::vector<std::string> warnings;
};

/// GMT: name <tab> description <tab> gene ids... per line.
inline GeneSetCollection parse_gmt(std::istream& in, std::string source = "") {
    GeneSetCollection out;
    out.source = std::move(source);
    std::string line;
    std::size_t line_no = 0;
    std::unordered_set<std::string> names;
    while (detail::read_line(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_tabs(line);
        const auto where = "gmt line " + std::to_string(line_no) + ": ";
        if (f.size() < 2) throw ValidationError(where + "expected name, description and genes separated by tabs");
        GeneSet set;
        set.name = detail::trim(f[0]);
        set.description = f[1];
        if (set.name.empty()) throw ValidationError(where + "empty set name");
        if (!names.insert(set.name).second) out.warnings.push_back(where + "duplicate set name " + set.name);
        std::unordered_set<std::string> seen;
        for (std::size_t k = 2; k < f.size(); ++k) {
            auto g = detail::trim(f[k]);
            if (g.empty()) continue;
            if (seen.insert(g).second) set.genes.push_back(std::move(g));
        }
        out.sets.push_back(std::move(set));
    }
    if (out.sets.empty()) out.warnings.push_back("gene-set file " + out.source + " holds no sets");
    return out;
}

inline GeneSetCollection parse_gmt(const std::string& path) {
    auto in = detail::open_file(path);
    return parse_gmt(in, path);
}

} // namespace corrdiff::pipeline
