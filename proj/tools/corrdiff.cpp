// corrdiff: paired correlation-matrix equality tests on gene sets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "corrdiff/corrdiff.hpp"

namespace fs = std::filesystem;
using namespace corrdiff;
using namespace corrdiff::pipeline;

namespace {

constexpr int exit_validation = 2;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct TestSelection {
    bool s = false, m = false, e = false;
};

TestSelection parse_tests(const std::string& list) {
    TestSelection t;
    for (const auto& x : split_list(list)) {
        if (x == "s" || x == "S") t.s = true;
        else if (x == "m" || x == "M") t.m = true;
        else if (x == "e" || x == "E") t.e = true;
        else throw ValidationError("unknown test '" + x + "' (expected s, m, e)");
    }
    if (!t.s && !t.m && !t.e) throw ValidationError("--tests selects nothing");
    return t;
}

NullRegime parse_regime(const std::string& s) {
    if (s == "ad" || s == "AD") return NullRegime::AD;
    if (s == "np" || s == "NP") return NullRegime::NP;
    if (s == "ai" || s == "AI") return NullRegime::AI;
    throw ValidationError("unknown null regime '" + s + "' (expected ad, np or ai)");
}

std::optional<double> parse_u(const std::string& s) {
    if (s == "auto") return std::nullopt;
    char* end = nullptr;
    const double u = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ValidationError("--u must be 'auto' or a number, got '" + s + "'");
    return u;
}

Hypothesis parse_hypothesis(const std::string& s) {
    if (s == "H0" || s == "h0") return Hypothesis::H0;
    if (s == "H1" || s == "h1") return Hypothesis::H1;
    throw ValidationError("unknown hypothesis '" + s + "' (expected H0 or H1)");
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& x : split_list(s)) {
        char* end = nullptr;
        const double v = std::strtod(x.c_str(), &end);
        if (*end != '\0') throw ValidationError("not a number: '" + x + "'");
        out.push_back(v);
    }
    return out;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw ValidationError("cannot write " + p.string());
    return os;
}

void make_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
}

// ------------------------------------------------------------------ test

struct TestArgs {
    std::string expr, pairs, gmt, out = ".";
    std::string tests = "s,m,e", null = "ad", u = "auto", fdr = "bh";
    std::optional<std::size_t> b;
    double alpha = 0.05;
    int w = 0;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::size_t min_genes = 5;
};

int run_test(const TestArgs& a) {
    BatchConfig cfg;
    const auto t = parse_tests(a.tests);
    cfg.squares = t.s;
    cfg.max = t.m;
    cfg.exceed = t.e;
    cfg.regime = parse_regime(a.null);
    cfg.b = a.b;
    cfg.alpha = a.alpha;
    cfg.w = a.w;
    cfg.u = parse_u(a.u);
    cfg.fdr = parse_fdr_method(a.fdr);
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    cfg.min_genes = a.min_genes;
    cfg.validate();

    const auto table = ingest(a.expr, a.pairs);
    for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
    const auto sets = parse_gmt(a.gmt);
    for (const auto& w : sets.warnings) std::cerr << "warning: " << w << '\n';
    std::cerr << "n = " << table.n() << " patients, " << table.p() << " genes, " << sets.sets.size() << " gene sets\n";

    const auto res = run_batch(table, sets, cfg);
    for (const auto& l : res.log) std::cerr << l << '\n';

    make_dir(a.out);
    auto results = open_out(fs::path(a.out) / "results.tsv");
    write_results_tsv(results, res);
    const auto summary = summarize(res);
    auto js = open_out(fs::path(a.out) / "summary.json");
    js << summary_json(res, summary).dump(2) << '\n';
    auto ts = open_out(fs::path(a.out) / "summary.tsv");
    write_summary_tsv(ts, summary);
    std::cerr << summary.sets_tested << " sets tested, " << summary.sets_skipped << " skipped, " << summary.sets_failed
              << " with errors; results in " << a.out << '\n';
    return 0;
}

// -------------------------------------------------------------- simulate

struct SimArgs {
    std::string model = "sparse", hypothesis = "H0";
    std::optional<std::size_t> p, n;
    double lambda = 0.5;
    std::size_t reps = min_harness_reps;
    std::string tests = "s,m,e", nulls = "ai,ad,np", ws = "0,1", u = "auto";
    std::size_t b_ad = default_b_ad, b_np = default_b_np;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    std::string out;
    bool header = true;
    // batch emission
    std::string emit_batch;
    std::size_t sets = 50;
    double h1_fraction = 0.0;
};

ModelConfig sim_model(const SimArgs& a) {
    const auto hyp = parse_hypothesis(a.hypothesis);
    if (a.model == "iid") {
        if (hyp == Hypothesis::H1) throw ValidationError("iid model has no alternative");
        IidModelConfig c;
        c.p = a.p.value_or(c.p);
        c.n = a.n.value_or(c.n);
        c.seed = a.seed;
        return c;
    }
    if (a.model == "dense") {
        DenseModelConfig c;
        c.p = a.p.value_or(c.p);
        c.n = a.n.value_or(c.n);
        c.lambda = a.lambda;
        c.hypothesis = hyp;
        c.base_seed = a.seed;
        if (c.p != 50) {
            const std::size_t small = std::max<std::size_t>(1, c.p / 5);
            c.block_sizes = {c.p - small, small};
        }
        return c;
    }
    if (a.model == "sparse") {
        SparseModelConfig c;
        c.p = a.p.value_or(c.p);
        c.n = a.n.value_or(c.n);
        c.hypothesis = hyp;
        c.seed = a.seed;
        return c;
    }
    throw ValidationError("unknown model '" + a.model + "' (expected iid, dense or sparse)");
}

int run_simulate(const SimArgs& a) {
    if (!a.emit_batch.empty()) {
        SyntheticBatchConfig sc;
        sc.model = a.model;
        sc.sets = a.sets;
        if (a.p) sc.genes_per_set = *a.p;
        if (a.n) sc.n = *a.n;
        sc.h1_fraction = a.h1_fraction;
        sc.seed = a.seed;
        make_dir(a.emit_batch);
        write_synthetic_batch(a.emit_batch, make_synthetic_batch(sc));
        std::cerr << "wrote expression.tsv, pairs.tsv, sets.gmt, labels.tsv to " << a.emit_batch << '\n';
        return 0;
    }
    AnalysisOptions opt;
    const auto t = parse_tests(a.tests);
    opt.squares = t.s;
    opt.max = t.m;
    opt.exceed = t.e;
    opt.ai = opt.ad = opt.np = false;
    for (const auto& r : split_list(a.nulls)) {
        switch (parse_regime(r)) {
        case NullRegime::AI: opt.ai = true; break;
        case NullRegime::AD: opt.ad = true; break;
        case NullRegime::NP: opt.np = true; break;
        }
    }
    if (!opt.ai && !opt.ad && !opt.np) throw ValidationError("--null selects nothing");
    opt.ws.clear();
    for (const auto& w : split_list(a.ws)) {
        if (w != "0" && w != "1") throw ValidationError("--w entries must be 0 or 1");
        opt.ws.push_back(w == "1" ? 1 : 0);
    }
    opt.b_ad = a.b_ad;
    opt.b_np = a.b_np;
    opt.alpha = a.alpha;
    opt.u = parse_u(a.u);
    opt.seed = a.seed;
    const auto report = run_harness(sim_model(a), opt, a.reps, a.threads);
    if (a.out.empty()) {
        write_harness_tsv(std::cout, {report}, a.header);
    } else {
        auto os = open_out(a.out);
        write_harness_tsv(os, {report}, a.header);
    }
    return 0;
}

// ----------------------------------------------------------------- power

struct PowerArgs {
    std::size_t n = 100, m = 10000;
    std::string deltas;
    std::size_t s = 0;
    double delta = 0.0;
    double u = -1.0;
    int w = 0;
    double alpha = 0.05;
    double gamma2bar = 0.0, gamma2bar_h1 = 0.0;
    std::string branch = "fixed";
    // threshold selection
    std::optional<double> rho;
    std::optional<double> prior_a, prior_b, prior_variance;
};

nlohmann::ordered_json bound_json(const BoundResult& b) {
    return {{"bound", b.value}, {"argument", b.argument}, {"condition_met", b.condition_met}};
}

int run_power(const PowerArgs& a) {
    nlohmann::ordered_json j;
    j["n"] = a.n;
    j["m"] = a.m;
    j["alpha"] = a.alpha;
    j["w"] = a.w;
    if (a.rho) {
        GammaPrior prior = GammaPrior::from_mode(a.n, a.alpha, a.prior_variance);
        if (a.prior_a || a.prior_b) {
            if (!a.prior_a || !a.prior_b) throw ValidationError("--prior-a and --prior-b go together");
            prior = GammaPrior{*a.prior_a, *a.prior_b, a.alpha};
        }
        const auto sel = select_threshold(a.n, a.m, *a.rho, a.w, prior, a.alpha);
        j["rho_s"] = *a.rho;
        j["prior"] = {{"a", prior.a}, {"b", prior.b}};
        j["u"] = sel.u;
        j["u_optimal"] = sel.u_optimal;
        j["cap"] = sel.cap;
        std::cout << j.dump(2) << '\n';
        return 0;
    }
    AlternativeSpec alt;
    if (!a.deltas.empty()) alt.deltas = parse_doubles(a.deltas);
    else alt.deltas.assign(a.s, a.delta);
    if (alt.deltas.empty()) throw ValidationError("give --deltas or --s with --delta, or --rho for threshold selection");
    if (a.branch != "fixed" && a.branch != "growing") throw ValidationError("--branch must be fixed or growing");
    const double u = a.u >= 0.0 ? a.u : math::normal_upper_quantile(a.alpha);
    j["s"] = alt.s();
    j["u"] = u;
    j["squares"] = bound_json(power_bound_squares(alt, a.n, a.m, a.gamma2bar, a.gamma2bar_h1, a.alpha));
    j["max"] = bound_json(
        power_bound_max(alt, a.n, a.m, a.alpha, a.branch == "fixed" ? MaxBranch::FixedS : MaxBranch::GrowingS));
    j["exceedance"] = bound_json(power_bound_exceed(alt, {u, a.w}, a.n, a.m, a.alpha));
    std::cout << j.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tests of equality of paired correlation matrices"};
    app.require_subcommand(1);

    TestArgs ta;
    auto* test = app.add_subcommand("test", "Test every gene set of a paired expression table");
    test->add_option("--expr", ta.expr, "Expression TSV (gene column, one column per sample)")->required();
    test->add_option("--pairs", ta.pairs, "Pairing TSV: sample_id, patient_id, condition (I/II)")->required();
    test->add_option("--gmt", ta.gmt, "Gene sets in GMT format")->required();
    test->add_option("--tests", ta.tests, "Comma list of s, m, e")->capture_default_str();
    test->add_option("--null", ta.null, "ad, np or ai")->capture_default_str();
    test->add_option("--B", ta.b, "Permutations (default 200 for ad, 1000 for np)");
    test->add_option("--alpha", ta.alpha, "Level used for threshold selection")->capture_default_str();
    test->add_option("--w", ta.w, "Exceedance weight, 0 or 1")->capture_default_str();
    test->add_option("--u", ta.u, "Exceedance threshold or 'auto'")->capture_default_str();
    test->add_option("--fdr", ta.fdr, "bh or by")->capture_default_str();
    test->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
    test->add_option("--out", ta.out, "Output directory")->capture_default_str();
    test->add_option("--threads", ta.threads, "Worker threads (0 = all cores)")->capture_default_str();
    test->add_option("--min-genes", ta.min_genes, "Smallest set tested")->capture_default_str();

    SimArgs sa;
    auto* sim = app.add_subcommand("simulate", "Size/power harness on a simulation model, or emit a synthetic batch");
    sim->add_option("--model", sa.model, "iid, dense or sparse")->capture_default_str();
    sim->add_option("--hypothesis", sa.hypothesis, "H0 or H1")->capture_default_str();
    sim->add_option("--p", sa.p, "Genes (per set with --emit-batch)");
    sim->add_option("--n", sa.n, "Patients");
    sim->add_option("--lambda", sa.lambda, "Dense model ridge")->capture_default_str();
    sim->add_option("--reps", sa.reps, "Replicates (>= 100)")->capture_default_str();
    sim->add_option("--tests", sa.tests, "Comma list of s, m, e")->capture_default_str();
    sim->add_option("--null", sa.nulls, "Comma list of ai, ad, np")->capture_default_str();
    sim->add_option("--w", sa.ws, "Comma list of exceedance weights")->capture_default_str();
    sim->add_option("--u", sa.u, "Exceedance threshold or 'auto'")->capture_default_str();
    sim->add_option("--B-ad", sa.b_ad, "Permutations for AD")->capture_default_str();
    sim->add_option("--B-np", sa.b_np, "Permutations for NP")->capture_default_str();
    sim->add_option("--alpha", sa.alpha, "Test level")->capture_default_str();
    sim->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
    sim->add_option("--threads", sa.threads, "Worker threads (0 = all cores)")->capture_default_str();
    sim->add_option("--out", sa.out, "Harness TSV (stdout when omitted)");
    sim->add_flag("!--no-header", sa.header, "Omit the TSV header");
    sim->add_option("--emit-batch", sa.emit_batch, "Write a synthetic batch (expression, pairs, gmt) to DIR");
    sim->add_option("--sets", sa.sets, "Gene sets in the emitted batch")->capture_default_str();
    sim->add_option("--h1-fraction", sa.h1_fraction, "Fraction of alternative sets in the batch")->capture_default_str();

    PowerArgs pa;
    auto* power = app.add_subcommand("power", "Power lower bounds, or threshold selection with --rho");
    power->add_option("--n", pa.n, "Patients")->capture_default_str();
    power->add_option("--m", pa.m, "Correlation pairs")->capture_default_str();
    power->add_option("--deltas", pa.deltas, "Comma list of Fisher-scale effects");
    power->add_option("--s", pa.s, "Number of non-null pairs (with --delta)");
    power->add_option("--delta", pa.delta, "Common effect for --s pairs");
    power->add_option("--u", pa.u, "Exceedance threshold (default z_{1-alpha})");
    power->add_option("--w", pa.w, "Exceedance weight, 0 or 1")->capture_default_str();
    power->add_option("--alpha", pa.alpha, "Test level")->capture_default_str();
    power->add_option("--gamma2bar", pa.gamma2bar, "Null mean squared correlation of d")->capture_default_str();
    power->add_option("--gamma2bar-h1", pa.gamma2bar_h1, "Same under the alternative")->capture_default_str();
    power->add_option("--branch", pa.branch, "Max-test bound: fixed or growing")->capture_default_str();
    power->add_option("--rho", pa.rho, "Non-null fraction; selects the exceedance threshold");
    power->add_option("--prior-a", pa.prior_a, "Gamma prior shape");
    power->add_option("--prior-b", pa.prior_b, "Gamma prior rate");
    power->add_option("--prior-variance", pa.prior_variance, "Gamma prior variance with the mode at z_alpha/sqrt(n-3)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }

    try {
        if (*test) return run_test(ta);
        if (*sim) return run_simulate(sa);
        if (*power) return run_power(pa);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
