#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "mdicart/cart.hpp"
#include "mdicart/dataset.hpp"
#include "mdicart/mdi.hpp"

namespace mdicart {

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t mtry = 0;            // 0 = regression default ceil(d/3)
    std::size_t nodesize = 5;
    std::optional<int> max_depth;
    bool bootstrap = true;           // n-out-of-n resampling with replacement
    std::uint64_t seed = 0;
    unsigned n_threads = 0;          // 0 = hardware concurrency
};

struct Forest {
    std::vector<Tree> trees;
    std::vector<std::vector<std::uint32_t>> per_tree_sample;  // bootstrap index multisets
    ForestParams params;
    std::size_t dim = 0;
};

namespace detail {

// Runs fn(t) for t in [0, count) on a small worker pool. All per-task
// randomness must be pre-derived by the caller; results keyed by t, so the
// outcome is independent of scheduling.
inline void parallel_for(std::size_t count, unsigned n_threads, const std::function<void(std::size_t)>& fn) {
    if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, count));
    if (n_threads <= 1) {
        for (std::size_t t = 0; t < count; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (unsigned w = 0; w < n_threads; ++w) {
        workers.emplace_back([&]() {
            for (std::size_t t = next.fetch_add(1); t < count; t = next.fetch_add(1)) fn(t);
        });
    }
    for (auto& th : workers) th.join();
}

}  // namespace detail

// Breiman-style ensemble: each tree is fitted on its own bootstrap resample
// with per-node mtry dimension draws. Tree t's resampling stream and fitting
// seed are derived from (seed, t) up front.
inline Forest fit_forest(const Dataset& data, ForestParams params) {
    data.validate();
    if (params.n_trees < 1) throw std::invalid_argument("fit_forest: n_trees must be >= 1");
    if (params.mtry == 0) params.mtry = (data.d + 2) / 3;  // ceil(d/3)
    if (params.mtry > data.d) throw std::invalid_argument("fit_forest: mtry must be in [1, d]");

    Forest forest;
    forest.params = params;
    forest.dim = data.d;
    forest.trees.resize(params.n_trees);
    forest.per_tree_sample.resize(params.n_trees);

    for (std::size_t t = 0; t < params.n_trees; ++t) {
        auto& sample = forest.per_tree_sample[t];
        sample.resize(data.n);
        if (params.bootstrap) {
            Rng rng(derive_seed(params.seed, StreamTag::bootstrap, t));
            for (std::uint32_t& idx : sample) idx = static_cast<std::uint32_t>(rng.below(data.n));
        } else {
            std::iota(sample.begin(), sample.end(), 0u);
        }
    }

    detail::parallel_for(params.n_trees, params.n_threads, [&](std::size_t t) {
        FitParams fp;
        fp.nodesize = params.nodesize;
        fp.max_depth = params.max_depth;
        fp.mtry = params.mtry;
        fp.seed = derive_seed(params.seed, StreamTag::tree, t);
        forest.trees[t] = fit_tree(subsample(data, forest.per_tree_sample[t]), fp);
    });
    return forest;
}

// Element-wise mean of the per-tree reports. Each tree's report is computed
// against its own bootstrap sample (its actual training set).
inline MdiReport forest_mdi(const Forest& forest, const Dataset& data) {
    if (data.d != forest.dim) throw std::invalid_argument("forest_mdi: dimension mismatch");
    const std::size_t m = forest.trees.size();
    std::vector<MdiReport> reports(m);
    detail::parallel_for(m, forest.params.n_threads, [&](std::size_t t) {
        reports[t] = empirical_mdi(forest.trees[t], subsample(data, forest.per_tree_sample[t]));
    });
    MdiReport mean;
    mean.per_variable.assign(forest.dim, 0.0);
    for (const MdiReport& r : reports) {
        for (std::size_t j = 0; j < forest.dim; ++j) mean.per_variable[j] += r.per_variable[j];
        mean.total_mdi += r.total_mdi;
        mean.empirical_variance_y += r.empirical_variance_y;
        mean.risk += r.risk;
        mean.r_squared += r.r_squared;
        mean.identity_residual += r.identity_residual;
    }
    const double inv = 1.0 / static_cast<double>(m);
    for (double& v : mean.per_variable) v *= inv;
    mean.total_mdi *= inv;
    mean.empirical_variance_y *= inv;
    mean.risk *= inv;
    mean.r_squared *= inv;
    mean.identity_residual *= inv;
    return mean;
}

inline double forest_predict(const Forest& forest, std::span<const double> point) {
    if (point.size() != forest.dim) throw std::invalid_argument("forest_predict: dimension mismatch");
    double sum = 0.0;
    for (const Tree& t : forest.trees) sum += predict(t, point);
    return sum / static_cast<double>(forest.trees.size());
}

// The per-variable MDI CSV of the averaged report; with per_tree set, rows
// gain a leading tree column (1-based) and the average appears as __mean__.
inline void write_forest_mdi_csv(const Forest& forest, const Dataset& data, std::ostream& os,
                                 bool per_tree = false) {
    if (!per_tree) {
        write_mdi_csv(forest_mdi(forest, data), os);
        return;
    }
    std::string buf = "tree,variable,importance\n";
    std::vector<double> mean(forest.dim, 0.0);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const MdiReport rep =
            empirical_mdi(forest.trees[t], subsample(data, forest.per_tree_sample[t]));
        for (std::size_t j = 0; j < forest.dim; ++j) {
            buf += std::to_string(t + 1);
            buf += ',';
            buf += std::to_string(j + 1);
            buf += ',';
            detail::format_double(buf, rep.per_variable[j]);
            buf += '\n';
            mean[j] += rep.per_variable[j];
        }
    }
    for (std::size_t j = 0; j < forest.dim; ++j) {
        buf += "__mean__,";
        buf += std::to_string(j + 1);
        buf += ',';
        detail::format_double(buf, mean[j] / static_cast<double>(forest.trees.size()));
        buf += '\n';
    }
    os << buf;
}

}  // namespace mdicart
