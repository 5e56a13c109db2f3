#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdicart/dataset.hpp"
#include "mdicart/forest.hpp"
#include "mdicart/mdi.hpp"
#include "mdicart/oracle.hpp"
#include "mdicart/synthdata.hpp"
#include "mdicart/version.hpp"

namespace mdicart {

// One experiment run is fully determined by this config; it is echoed into
// the output header so every CSV is reproducible from its own metadata.
struct ExperimentConfig {
    ModelSpec model;
    std::size_t n = 10000;
    std::size_t n_trees = 100;
    int depth = 10;            // truncation / max depth k; -1 = grow until nodesize stops
    std::size_t nodesize = 1;
    std::size_t mtry = 0;      // 0 = per-module default
    std::uint64_t seed = 1;
    int reps = 1;
    std::string out;           // output path; empty = stdout
    bool check = false;        // exit 2 when a tolerance fails
    std::string data;          // decompose: CSV dataset instead of a generator
    unsigned n_threads = 0;
};

// Exit codes shared by the library entry points and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitToleranceFailure = 2;

namespace detail {

inline std::string config_echo(const std::string& name, const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "# experiment: " << name << "\n# config: model=" << to_string(cfg.model.kind);
    if (cfg.model.kind == ModelKind::linear) {
        os << " alpha=";
        for (std::size_t j = 0; j < cfg.model.alphas.size(); ++j)
            os << (j ? "," : "") << cfg.model.alphas[j];
    } else if (cfg.model.kind == ModelKind::additive) {
        os << " components=";
        for (std::size_t j = 0; j < cfg.model.components.size(); ++j)
            os << (j ? "," : "") << to_string(cfg.model.components[j]);
    } else {
        os << " alpha=" << cfg.model.alpha;
    }
    if (cfg.model.kind == ModelKind::correlated) os << " beta=" << cfg.model.beta;
    os << " sigma=" << cfg.model.sigma << " d=" << cfg.model.d << " n=" << cfg.n
       << " trees=" << cfg.n_trees << " depth=" << cfg.depth << " nodesize=" << cfg.nodesize
       << " mtry=" << cfg.mtry << " seed=" << cfg.seed << " reps=" << cfg.reps
       << (cfg.data.empty() ? "" : " data=" + cfg.data) << "\n";
    return os.str();
}

class ExperimentWriter {
public:
    ExperimentWriter(const std::string& name, const ExperimentConfig& cfg)
        : name_(name), echo_(config_echo(name, cfg)), out_path_(cfg.out),
          start_(std::chrono::steady_clock::now()) {}

    std::ostream& rows() { return rows_; }

    void finish() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ostringstream head;
        head << "# " << kVersion << "\n" << echo_ << "# runtime_seconds: " << secs << "\n";
        if (out_path_.empty()) {
            std::cout << head.str() << rows_.str();
        } else {
            std::ofstream os(out_path_);
            if (!os) throw std::runtime_error("cannot open output file " + out_path_);
            os << head.str() << rows_.str();
        }
    }

private:
    std::string name_;
    std::string echo_;
    std::string out_path_;
    std::chrono::steady_clock::time_point start_;
    std::ostringstream rows_;
};

inline std::string fmt(double v) {
    std::string s;
    format_double(s, v);
    return s;
}

inline double rel_err(double value, double target) {
    return std::abs(value - target) / std::abs(target);
}

}  // namespace detail

// Variance decomposition by depth: one row per truncation level k with the
// split total, residual risk and their exact-identity residual.
inline int run_decompose(const ExperimentConfig& cfg) {
    detail::ExperimentWriter w("decompose", cfg);
    w.rows() << "rep,k,total_mdi,risk,residual,r_squared\n";
    bool ok = true;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::uint64_t seed = derive_seed(cfg.seed, StreamTag::rep, rep);
        const Dataset data =
            cfg.data.empty() ? generate(cfg.model, cfg.n, seed) : read_csv(cfg.data);
        FitParams fp;
        fp.nodesize = cfg.nodesize;
        if (cfg.depth >= 0) fp.max_depth = cfg.depth;
        fp.mtry = cfg.mtry;
        fp.seed = seed;
        const Tree tree = fit_tree(data, fp);
        const int kmax = tree.depth();
        for (int k = 0; k <= kmax; ++k) {
            const MdiReport rep_k = empirical_mdi(k < kmax ? truncate(tree, k) : tree, data);
            w.rows() << rep << ',' << k << ',' << detail::fmt(rep_k.total_mdi) << ','
                     << detail::fmt(rep_k.risk) << ',' << detail::fmt(rep_k.identity_residual)
                     << ',' << detail::fmt(rep_k.r_squared) << '\n';
            if (cfg.check) {
                const double tol = 1e-9 * std::max(1.0, rep_k.empirical_variance_y);
                if (std::abs(rep_k.identity_residual) > tol) ok = false;
                if (k == 0 && rep_k.total_mdi != 0.0) ok = false;
                if (k == kmax && cfg.nodesize == 1 && cfg.depth < 0) {
                    if (rep_k.risk != 0.0 || std::abs(rep_k.r_squared - 1.0) > 1e-9) ok = false;
                }
            }
        }
    }
    w.finish();
    return ok ? kExitOk : kExitToleranceFailure;
}

// Per-variable forest MDI against the analytic decomposition targets
// (alpha_j^2/12 for the linear model, catalog variances for the additive
// one), with the population-tree column where a closed form exists.
inline int run_additive_linear(const ExperimentConfig& cfg) {
    const bool linear = cfg.model.kind == ModelKind::linear;
    detail::ExperimentWriter w(linear ? "linear" : "additive", cfg);
    w.rows() << "rep,variable,mdi_forest,target,rel_err,abs_err"
             << (linear ? ",mdi_population\n" : "\n");
    const VarianceReport targets = population_variance(cfg.model);
    std::vector<double> pop_mdi;
    if (linear) {
        const TheoreticalTree t =
            build_theoretical_tree(cfg.model, std::max(cfg.depth, 0), TieBreak::prefer_low_dim);
        pop_mdi = population_mdi(t);
    }
    bool ok = true;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::uint64_t seed = derive_seed(cfg.seed, StreamTag::rep, rep);
        const Dataset data = generate(cfg.model, cfg.n, seed);
        ForestParams fp;
        fp.n_trees = cfg.n_trees;
        fp.mtry = cfg.mtry;
        fp.nodesize = cfg.nodesize;
        if (cfg.depth >= 0) fp.max_depth = cfg.depth;
        fp.seed = seed;
        fp.n_threads = cfg.n_threads;
        const MdiReport mdi = forest_mdi(fit_forest(data, fp), data);
        for (std::size_t j = 0; j < cfg.model.d; ++j) {
            const double target = targets.per_variable[j].value_or(0.0);
            const double abs_err = std::abs(mdi.per_variable[j] - target);
            const double rel = target != 0.0 ? abs_err / target : 0.0;
            w.rows() << rep << ',' << (j + 1) << ',' << detail::fmt(mdi.per_variable[j]) << ','
                     << detail::fmt(target) << ',' << detail::fmt(rel) << ','
                     << detail::fmt(abs_err);
            if (linear) w.rows() << ',' << detail::fmt(pop_mdi[j]);
            w.rows() << '\n';
            if (cfg.check) {
                if (target > 1e-12 ? rel > 0.15 : abs_err > 0.01) ok = false;
                if (linear && cfg.depth >= 12 && std::abs(pop_mdi[j] - target) > 1e-3) ok = false;
            }
        }
    }
    w.finish();
    return ok ? kExitOk : kExitToleranceFailure;
}

// Interaction model: the MDI sum against alpha^2((4/3)^d - 1), the exact
// two-tree disagreement (d = 2), and the forest's per-variable symmetry gap.
inline int run_multiplicative(const ExperimentConfig& cfg) {
    detail::ExperimentWriter w("multiplicative", cfg);
    w.rows() << "rep,metric,value\n";
    const double target =
        cfg.model.alpha * cfg.model.alpha *
        (std::pow(4.0 / 3.0, static_cast<double>(cfg.model.d)) - 1.0);
    bool ok = true;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::uint64_t seed = derive_seed(cfg.seed, StreamTag::rep, rep);
        const Dataset data = generate(cfg.model, cfg.n, seed);
        ForestParams fp;
        fp.n_trees = cfg.n_trees;
        fp.mtry = cfg.mtry;
        fp.nodesize = cfg.nodesize;
        if (cfg.depth >= 0) fp.max_depth = cfg.depth;
        fp.seed = seed;
        fp.n_threads = cfg.n_threads;
        const MdiReport mdi = forest_mdi(fit_forest(data, fp), data);
        auto row = [&](const std::string& metric, double v) {
            w.rows() << rep << ',' << metric << ',' << detail::fmt(v) << '\n';
        };
        row("sum_mdi", mdi.total_mdi);
        row("sum_target", target);
        row("sum_rel_err", detail::rel_err(mdi.total_mdi, target));
        double lo = mdi.per_variable[0], hi = mdi.per_variable[0];
        for (double v : mdi.per_variable) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        row("symmetry_gap", (hi - lo) / (mdi.total_mdi / static_cast<double>(cfg.model.d)));
        for (std::size_t j = 0; j < cfg.model.d; ++j)
            row("mdi_x" + std::to_string(j + 1), mdi.per_variable[j]);
        if (cfg.model.d == 2) {
            const double disagreement = tree_disagreement(cfg.model, std::max(cfg.depth, 2));
            const double dis_target = cfg.model.alpha * cfg.model.alpha / 16.0;
            row("disagreement", disagreement);
            row("disagreement_target", dis_target);
            if (cfg.check && std::abs(disagreement - dis_target) > 1e-12) ok = false;
        }
        if (cfg.check && detail::rel_err(mdi.total_mdi, target) > 0.15) ok = false;
    }
    w.finish();
    return ok ? kExitOk : kExitToleranceFailure;
}

// Dependent-inputs model: group MDI of the correlated pair against
// V[X1 + X2], the third variable against alpha^2/12, the root-split
// frequency, and the blocked-phase disagreement.
inline int run_correlated(const ExperimentConfig& cfg) {
    detail::ExperimentWriter w("correlated", cfg);
    w.rows() << "rep,metric,value\n";
    const double group_target = correlated_group_variance(cfg.model.beta);
    const double x3_target = cfg.model.alpha * cfg.model.alpha / 12.0;
    const double dis_target = (1.0 - std::exp2(-2.0 * cfg.model.beta)) / 3.0;
    bool ok = true;
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const std::uint64_t seed = derive_seed(cfg.seed, StreamTag::rep, rep);
        const Dataset data = generate(cfg.model, cfg.n, seed);
        ForestParams fp;
        fp.n_trees = cfg.n_trees;
        fp.mtry = cfg.mtry;
        fp.nodesize = cfg.nodesize;
        if (cfg.depth >= 0) fp.max_depth = cfg.depth;
        fp.seed = seed;
        fp.n_threads = cfg.n_threads;
        const Forest forest = fit_forest(data, fp);
        const MdiReport mdi = forest_mdi(forest, data);
        std::size_t root_dim3 = 0;
        for (const Tree& t : forest.trees)
            if (!t.nodes[0].is_leaf() && t.nodes[0].split->dim == 2) ++root_dim3;
        const double group = mdi.per_variable[0] + mdi.per_variable[1];
        const double disagreement = tree_disagreement(cfg.model, cfg.model.beta + 12);
        auto row = [&](const std::string& metric, double v) {
            w.rows() << rep << ',' << metric << ',' << detail::fmt(v) << '\n';
        };
        row("group_mdi_12", group);
        row("group_target", group_target);
        row("group_rel_err", detail::rel_err(group, group_target));
        row("mdi_x1", mdi.per_variable[0]);
        row("mdi_x2", mdi.per_variable[1]);
        row("mdi_x3", mdi.per_variable[2]);
        row("mdi_x3_target", x3_target);
        row("mdi_x3_rel_err", detail::rel_err(mdi.per_variable[2], x3_target));
        row("root_split_frac_dim3",
            static_cast<double>(root_dim3) / static_cast<double>(forest.trees.size()));
        row("disagreement", disagreement);
        row("disagreement_target", dis_target);
        if (cfg.check) {
            if (detail::rel_err(group, group_target) > 0.15) ok = false;
            if (detail::rel_err(mdi.per_variable[2], x3_target) > 0.15) ok = false;
            if (std::abs(disagreement - dis_target) > 1e-6) ok = false;
        }
    }
    w.finish();
    return ok ? kExitOk : kExitToleranceFailure;
}

}  // namespace mdicart
