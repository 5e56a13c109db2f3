#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdicart/dataset.hpp"
#include "mdicart/geometry.hpp"
#include "mdicart/rng.hpp"

namespace mdicart {

struct FitParams {
    std::size_t nodesize = 1;        // a node with more samples than this keeps splitting
    std::optional<int> max_depth;    // depth cap; unset = grow until nodesize stops it
    std::size_t mtry = 0;            // candidate dims drawn per node; 0 = all dims
    std::uint64_t seed = 0;          // drives the per-node dimension draws
};

struct TreeNode {
    Cell cell;
    std::uint32_t begin = 0, end = 0;  // slice of Tree::sample_order holding this node's samples
    double mean_y = 0.0;
    int depth = 0;
    std::optional<Split> split;
    double gain = 0.0;                 // variance decrease of the stored split
    std::int32_t left = -1, right = -1;

    bool is_leaf() const { return !split.has_value(); }
    std::size_t n_samples() const { return end - begin; }
};

// Fitted regression tree. Nodes are stored in creation (breadth-first) order,
// nodes[0] is the root. `sample_order` is a permutation of the training row
// indices; every node's sample set is the contiguous slice [begin, end).
struct Tree {
    std::vector<TreeNode> nodes;
    std::vector<std::uint32_t> sample_order;
    FitParams params;
    std::size_t training_n = 0;
    std::size_t dim = 0;

    std::span<const std::uint32_t> samples(const TreeNode& node) const {
        return {sample_order.data() + node.begin, node.n_samples()};
    }

    int depth() const {
        int k = 0;
        for (const TreeNode& nd : nodes) k = std::max(k, nd.depth);
        return k;
    }

    std::size_t n_leaves() const {
        std::size_t c = 0;
        for (const TreeNode& nd : nodes) c += nd.is_leaf();
        return c;
    }
};

struct SplitCandidate {
    Split split;
    double gain = 0.0;
};

namespace detail {

inline double biased_variance(std::span<const double> y) {
    if (y.empty()) return 0.0;
    double sum = 0.0;
    for (double v : y) sum += v;
    const double mean = sum / static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    return ss / static_cast<double>(y.size());
}

}  // namespace detail

// Variance decrease of the split (j, z) on the given samples: within-cell
// variance minus the count-weighted child variances, all normalized by the
// cell count (0/0 = 0 for an empty child). Two-pass reference evaluation;
// the fitter's scan is checked against this in the tests.
inline double empirical_criterion(const Dataset& data, std::span<const std::uint32_t> indices,
                                  const Cell& cell, int dim, double z) {
    if (indices.empty()) throw std::invalid_argument("empirical_criterion: empty cell");
    if (dim < 0 || static_cast<std::size_t>(dim) >= data.d)
        throw std::invalid_argument("empirical_criterion: dimension out of range");
    if (!(cell.lower(dim) < z && z < cell.upper(dim)))
        throw std::invalid_argument("empirical_criterion: threshold outside the open cell side");

    const std::size_t m = indices.size();
    double sum = 0.0, sum_l = 0.0;
    std::size_t m_l = 0;
    for (std::uint32_t i : indices) {
        sum += data.y[i];
        if (data.xat(i, dim) < z) {
            sum_l += data.y[i];
            ++m_l;
        }
    }
    const double mean = sum / static_cast<double>(m);
    const double mean_l = m_l > 0 ? sum_l / static_cast<double>(m_l) : 0.0;
    const std::size_t m_r = m - m_l;
    const double mean_r = m_r > 0 ? (sum - sum_l) / static_cast<double>(m_r) : 0.0;

    double ss_parent = 0.0, ss_children = 0.0;
    for (std::uint32_t i : indices) {
        const double dy = data.y[i] - mean;
        ss_parent += dy * dy;
        const double dc = data.y[i] - (data.xat(i, dim) < z ? mean_l : mean_r);
        ss_children += dc * dc;
    }
    const double raw = (ss_parent - ss_children) / static_cast<double>(m);
    if (raw < -1e-12 * std::max(1.0, ss_parent / static_cast<double>(m)))
        throw std::logic_error("empirical_criterion: negative gain beyond rounding budget");
    return raw < 0.0 ? 0.0 : raw;
}

namespace detail {

struct SplitScratch {
    std::vector<std::pair<double, double>> vy;  // (coordinate, response), sorted per scan
};

// Scans one dimension: sorts the node's (value, response) pairs, then
// evaluates the criterion at every midpoint of consecutive distinct values
// with running prefix sums. Candidates improve the incumbent only on
// strictly larger gain, so the lowest dim / lowest threshold wins ties when
// dims are scanned in ascending order.
inline void scan_dimension(const Dataset& data, std::span<const std::uint32_t> indices, int dim,
                           double total_sum, double& best_gain, std::optional<Split>& best,
                           SplitScratch& scratch, double neg_tol) {
    const std::size_t m = indices.size();
    scratch.vy.resize(m);
    for (std::size_t t = 0; t < m; ++t)
        scratch.vy[t] = {data.xat(indices[t], dim), data.y[indices[t]]};
    std::sort(scratch.vy.begin(), scratch.vy.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    const double md = static_cast<double>(m);
    const double parent_term = total_sum * total_sum / md;
    double sum_l = 0.0;
    for (std::size_t t = 1; t < m; ++t) {
        sum_l += scratch.vy[t - 1].second;
        if (scratch.vy[t - 1].first == scratch.vy[t].first) continue;
        const double z = 0.5 * (scratch.vy[t - 1].first + scratch.vy[t].first);
        const double sum_r = total_sum - sum_l;
        const double raw = (sum_l * sum_l / static_cast<double>(t) +
                            sum_r * sum_r / static_cast<double>(m - t) - parent_term) /
                           md;
        if (raw < -neg_tol)
            throw std::logic_error("best_split: negative gain beyond rounding budget");
        if (raw > best_gain) {
            best_gain = raw;
            best = Split{dim, z};
        }
    }
}

inline std::optional<SplitCandidate> best_split_impl(const Dataset& data,
                                                     std::span<const std::uint32_t> indices,
                                                     std::span<const int> candidate_dims,
                                                     SplitScratch& scratch, double neg_tol) {
    if (indices.empty()) throw std::invalid_argument("best_split: empty cell");
    double total_sum = 0.0;
    for (std::uint32_t i : indices) total_sum += data.y[i];

    double best_gain = 0.0;  // zero-gain splits are never taken
    std::optional<Split> best;
    for (int dim : candidate_dims)
        scan_dimension(data, indices, dim, total_sum, best_gain, best, scratch, neg_tol);
    if (!best) return std::nullopt;
    return SplitCandidate{*best, best_gain};
}

}  // namespace detail

// Maximizes the split criterion over the candidate dims, with thresholds at
// midpoints of consecutive distinct sample values. Absent when no dimension
// has two distinct values or the best achievable gain is zero.
inline std::optional<SplitCandidate> best_split(const Dataset& data,
                                                std::span<const std::uint32_t> indices,
                                                const Cell& cell,
                                                std::span<const int> candidate_dims) {
    (void)cell;  // samples inside the cell already bound the thresholds
    detail::SplitScratch scratch;
    double vy = 0.0;
    {
        double s = 0.0;
        for (std::uint32_t i : indices) s += data.y[i];
        const double mean = s / static_cast<double>(indices.size());
        for (std::uint32_t i : indices) vy += (data.y[i] - mean) * (data.y[i] - mean);
        vy /= static_cast<double>(indices.size());
    }
    return detail::best_split_impl(data, indices, candidate_dims, scratch,
                                   1e-9 * std::max(1.0, vy));
}

// Grows a tree breadth-first: a node is split while it holds more than
// `nodesize` samples, its depth is below the cap, and a positive-gain split
// exists among its drawn dims. The per-node dim draw is seeded by
// (params.seed, node creation index), so fits are schedule-independent.
inline Tree fit_tree(const Dataset& data, FitParams params) {
    data.validate();
    if (params.nodesize < 1) throw std::invalid_argument("fit_tree: nodesize must be >= 1");
    if (params.mtry == 0) params.mtry = data.d;
    if (params.mtry > data.d) throw std::invalid_argument("fit_tree: mtry must be in [1, d]");
    if (params.max_depth && *params.max_depth < 0)
        throw std::invalid_argument("fit_tree: max_depth must be >= 0");

    Tree tree;
    tree.params = params;
    tree.training_n = data.n;
    tree.dim = data.d;
    tree.sample_order.resize(data.n);
    std::iota(tree.sample_order.begin(), tree.sample_order.end(), 0u);

    const double neg_tol = 1e-9 * std::max(1.0, detail::biased_variance(data.y));
    detail::SplitScratch scratch;
    std::vector<int> all_dims(data.d);
    std::iota(all_dims.begin(), all_dims.end(), 0);
    std::vector<int> drawn;

    {
        TreeNode root;
        root.cell = Cell::unit(data.d);
        root.begin = 0;
        root.end = static_cast<std::uint32_t>(data.n);
        root.depth = 0;
        tree.nodes.push_back(std::move(root));
    }

    std::deque<std::size_t> queue{0};
    while (!queue.empty()) {
        const std::size_t id = queue.front();
        queue.pop_front();

        const std::uint32_t begin = tree.nodes[id].begin, end = tree.nodes[id].end;
        std::span<std::uint32_t> slice(tree.sample_order.data() + begin, end - begin);
        {
            double sum = 0.0;
            for (std::uint32_t i : slice) sum += data.y[i];
            tree.nodes[id].mean_y = sum / static_cast<double>(slice.size());
        }

        const bool size_ok = slice.size() > params.nodesize;
        const bool depth_ok = !params.max_depth || tree.nodes[id].depth < *params.max_depth;
        if (!size_ok || !depth_ok) continue;

        std::span<const int> dims(all_dims);
        if (params.mtry < data.d) {
            Rng rng(derive_seed(params.seed, StreamTag::node_dims, id));
            drawn = all_dims;
            for (std::size_t t = 0; t < params.mtry; ++t) {
                const std::size_t pick = t + rng.below(drawn.size() - t);
                std::swap(drawn[t], drawn[pick]);
            }
            drawn.resize(params.mtry);
            std::sort(drawn.begin(), drawn.end());
            dims = drawn;
        }

        auto cand = detail::best_split_impl(data, slice, dims, scratch, neg_tol);
        if (!cand) continue;

        auto mid = std::stable_partition(slice.begin(), slice.end(), [&](std::uint32_t i) {
            return data.xat(i, cand->split.dim) < cand->split.threshold;
        });
        const std::uint32_t cut = begin + static_cast<std::uint32_t>(mid - slice.begin());

        auto [cl, cr] = split_cell(tree.nodes[id].cell, cand->split);
        tree.nodes[id].split = cand->split;
        tree.nodes[id].gain = cand->gain;

        TreeNode left, right;
        left.cell = std::move(cl);
        left.begin = begin;
        left.end = cut;
        left.depth = tree.nodes[id].depth + 1;
        right.cell = std::move(cr);
        right.begin = cut;
        right.end = end;
        right.depth = left.depth;

        tree.nodes[id].left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(left));
        tree.nodes[id].right = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back(std::move(right));
        queue.push_back(tree.nodes[id].left);
        queue.push_back(tree.nodes[id].right);
    }
    return tree;
}

// Keeps only nodes of depth <= k; nodes at depth k become leaves. Stored
// stats are copied, nothing is recomputed.
inline Tree truncate(const Tree& tree, int k) {
    if (k < 0) throw std::invalid_argument("truncate: k must be >= 0");
    Tree out;
    out.params = tree.params;
    out.training_n = tree.training_n;
    out.dim = tree.dim;
    out.sample_order = tree.sample_order;
    out.nodes.reserve(tree.nodes.size());

    // old id -> new id; breadth-first copy preserves creation order
    std::vector<std::int32_t> remap(tree.nodes.size(), -1);
    std::deque<std::size_t> queue{0};
    remap[0] = 0;
    out.nodes.push_back(tree.nodes[0]);
    out.nodes[0].left = out.nodes[0].right = -1;
    if (tree.nodes[0].depth >= k) {
        out.nodes[0].split.reset();
        out.nodes[0].gain = 0.0;
        return out;
    }
    while (!queue.empty()) {
        const std::size_t id = queue.front();
        queue.pop_front();
        const TreeNode& src = tree.nodes[id];
        TreeNode& dst = out.nodes[remap[id]];
        if (src.is_leaf()) continue;
        if (src.depth >= k) {
            dst.split.reset();
            dst.gain = 0.0;
            dst.left = dst.right = -1;
            continue;
        }
        for (std::int32_t child : {src.left, src.right}) {
            const std::int32_t nid = static_cast<std::int32_t>(out.nodes.size());
            remap[child] = nid;
            out.nodes.push_back(tree.nodes[child]);
            out.nodes.back().left = out.nodes.back().right = -1;
            queue.push_back(child);
        }
        dst.left = remap[src.left];
        dst.right = remap[src.right];
    }
    return out;
}

// Mean response of the leaf containing the point.
inline double predict(const Tree& tree, std::span<const double> point) {
    if (point.size() != tree.dim) throw std::invalid_argument("predict: dimension mismatch");
    std::size_t id = 0;
    while (!tree.nodes[id].is_leaf()) {
        const Split& s = *tree.nodes[id].split;
        id = point[s.dim] < s.threshold ? tree.nodes[id].left : tree.nodes[id].right;
    }
    return tree.nodes[id].mean_y;
}

namespace detail {

inline void write_node_line(std::string& out, int depth, const std::optional<Split>& split,
                            double gain, const std::string& weight_field, double mean) {
    out += std::to_string(depth);
    out += ' ';
    if (split) {
        out += std::to_string(split->dim + 1);  // 1-based in reports
        out += ' ';
        format_double(out, split->threshold);
        out += ' ';
        format_double(out, gain);
    } else {
        out += "- - -";
    }
    out += ' ';
    out += weight_field;
    out += ' ';
    format_double(out, mean);
    out += '\n';
}

}  // namespace detail

// Line-oriented text export, one node per line in pre-order:
//   depth dim z gain n mean
// with `-` in dim/z/gain for leaves and dims printed 1-based.
inline void write_tree(const Tree& tree, std::ostream& os) {
    std::string buf;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        const TreeNode& nd = tree.nodes[id];
        detail::write_node_line(buf, nd.depth, nd.split, nd.gain, std::to_string(nd.n_samples()),
                                nd.mean_y);
        if (!nd.is_leaf()) {
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        }
    }
    os << buf;
}

inline std::string tree_to_string(const Tree& tree) {
    std::ostringstream os;
    write_tree(tree, os);
    return os.str();
}

}  // namespace mdicart
