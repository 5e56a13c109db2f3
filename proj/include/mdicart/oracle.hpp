#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdicart/cart.hpp"
#include "mdicart/geometry.hpp"
#include "mdicart/rng.hpp"
#include "mdicart/synthdata.hpp"

namespace mdicart {

struct UnsupportedCellError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfeasibleCellError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TieBreak { prefer_low_dim, prefer_high_dim, round_robin };

inline const char* to_string(TieBreak t) {
    switch (t) {
        case TieBreak::prefer_low_dim: return "prefer-low-dim";
        case TieBreak::prefer_high_dim: return "prefer-high-dim";
        case TieBreak::round_robin: return "round-robin";
    }
    return "?";
}

// ===========================================================================
// Closed-form population split criteria
// ===========================================================================

// Linear model: the criterion along dim j is the downward parabola
// (alpha_j^2/4)(s - a_j)(b_j - s); its maximum sits at the cell center.
inline double criterion_linear(const Cell& cell, std::span<const double> alphas, int dim,
                               double s) {
    if (alphas.size() != cell.dim()) throw std::invalid_argument("criterion_linear: alpha size");
    if (dim < 0 || static_cast<std::size_t>(dim) >= cell.dim())
        throw std::invalid_argument("criterion_linear: dimension out of range");
    const double a = cell.lower(dim), b = cell.upper(dim);
    if (!(a < s && s < b)) throw std::invalid_argument("criterion_linear: s outside (a_j, b_j)");
    const double alpha = alphas[dim];
    return 0.25 * alpha * alpha * (s - a) * (b - s);
}

// Multiplicative model: alpha^2 (s - a_j)(b_j - s) prod_{l != j} (a_l + b_l)^2.
inline double criterion_multiplicative(const Cell& cell, double alpha, int dim, double s) {
    if (dim < 0 || static_cast<std::size_t>(dim) >= cell.dim())
        throw std::invalid_argument("criterion_multiplicative: dimension out of range");
    const double a = cell.lower(dim), b = cell.upper(dim);
    if (!(a < s && s < b))
        throw std::invalid_argument("criterion_multiplicative: s outside (a_j, b_j)");
    double prod = 1.0;
    for (std::size_t l = 0; l < cell.dim(); ++l)
        if (static_cast<int>(l) != dim) prod *= (cell.lower(l) + cell.upper(l)) *
                                                (cell.lower(l) + cell.upper(l));
    return alpha * alpha * (s - a) * (b - s) * prod;
}

// ---------------------------------------------------------------------------
// Diagonal-blocks machinery (correlated model)
// ---------------------------------------------------------------------------

// Conditional law of (X1, X2) on a cell, when the cell is reachable by
// population splits: either a plain uniform rectangle (n_blocks == 1) or a
// rescaled diagonal-blocks law on a square (n_blocks >= 2).
struct CorrelatedState {
    int n_blocks = 1;
    double s1_lo = 0.0, s1_hi = 1.0;  // support of X1 inside the cell
    double s2_lo = 0.0, s2_hi = 1.0;  // support of X2; equals s1 when blocked

    bool blocked() const { return n_blocks >= 2; }
};

// Split criterion of the n-block diagonal law on [0,1]^2 along the first
// coordinate at u, via the piecewise-rational closed form with block index
// floor(n u). Both coordinates give the same value by exchangeability.
inline double block_root_criterion(int n_blocks, double u) {
    if (n_blocks < 1) throw std::invalid_argument("block_root_criterion: n_blocks must be >= 1");
    if (!(u >= 0.0 && u < 1.0))
        throw std::invalid_argument("block_root_criterion: u must be in [0, 1)");
    const double n = static_cast<double>(n_blocks);
    int li = static_cast<int>(std::floor(n * u));
    li = std::min(li, n_blocks - 1);
    const double l = static_cast<double>(li);

    double left_mean_shift = u / 2.0 + (2.0 * l + 1.0) / (2.0 * n);
    if (li > 0) left_mean_shift -= (l * l + l) / (2.0 * n * n * u);
    const double first = u * left_mean_shift * left_mean_shift;

    const double right_mean_shift = (1.0 + u) / 2.0 -
                                    (2.0 * l + 1.0) * u / (2.0 * n * (1.0 - u)) +
                                    (l * (l + 1.0) / (n * n) + 1.0) / (2.0 * (1.0 - u));
    const double second = (1.0 - u) * right_mean_shift * right_mean_shift;
    return -1.0 + first + second;
}

namespace detail {

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline std::optional<CorrelatedState> classify_correlated_cell(const Cell& cell, int beta) {
    const int n_blocks = 1 << beta;
    const double width = 1.0 / static_cast<double>(n_blocks);
    const double a1 = cell.lower(0), b1 = cell.upper(0);
    const double a2 = cell.lower(1), b2 = cell.upper(1);

    int first = -1, last = -1;
    bool all_complete = true;
    for (int i = 0; i < n_blocks; ++i) {
        const double lo = i * width, hi = (i + 1) * width;
        const double o1_lo = std::max(a1, lo), o1_hi = std::min(b1, hi);
        const double o2_lo = std::max(a2, lo), o2_hi = std::min(b2, hi);
        if (o1_hi <= o1_lo || o2_hi <= o2_lo) continue;
        if (first < 0) first = i;
        last = i;
        if (!(o1_lo == lo && o1_hi == hi && o2_lo == lo && o2_hi == hi)) all_complete = false;
    }
    if (first < 0) return std::nullopt;  // zero-mass cell

    const int count = last - first + 1;
    if (count == 1) {
        const double lo = first * width, hi = (first + 1) * width;
        CorrelatedState st;
        st.n_blocks = 1;
        st.s1_lo = std::max(a1, lo);
        st.s1_hi = std::min(b1, hi);
        st.s2_lo = std::max(a2, lo);
        st.s2_hi = std::min(b2, hi);
        return st;
    }
    if (!all_complete) return std::nullopt;  // partially covered blocks: not in the family
    CorrelatedState st;
    st.n_blocks = count;
    st.s1_lo = st.s2_lo = first * width;
    st.s1_hi = st.s2_hi = (last + 1) * width;
    return st;
}

// Criterion along dim 0 or 1 given the conditional state. Splits outside the
// support put all mass on one side and decrease nothing.
inline double correlated_pair_criterion(const CorrelatedState& st, int dim, double s) {
    const double lo = dim == 0 ? st.s1_lo : st.s2_lo;
    const double hi = dim == 0 ? st.s1_hi : st.s2_hi;
    if (s <= lo || s >= hi) return 0.0;
    if (!st.blocked()) return 0.25 * (s - lo) * (hi - s);  // unit-coefficient linear criterion
    const double len = st.s1_hi - st.s1_lo;
    return len * len * block_root_criterion(st.n_blocks, (s - lo) / len);
}

}  // namespace detail

// Correlated model (d = 3): dims 1-2 carry the diagonal-blocks law, dim 3 is
// an independent uniform with coefficient alpha, so its criterion separates
// out as the plain linear one. Throws UnsupportedCellError when the cell is
// not reachable by population splits (callers fall back to mc_criterion).
inline double criterion_correlated(const Cell& cell, int beta, double alpha, int dim, double s) {
    if (cell.dim() != 3) throw std::invalid_argument("criterion_correlated: cell must be 3-d");
    if (beta < 0) throw std::invalid_argument("criterion_correlated: beta must be >= 0");
    if (dim < 0 || dim > 2) throw std::invalid_argument("criterion_correlated: dim out of range");
    if (!(cell.lower(dim) < s && s < cell.upper(dim)))
        throw std::invalid_argument("criterion_correlated: s outside (a_j, b_j)");
    if (dim == 2) return 0.25 * alpha * alpha * (s - cell.lower(2)) * (cell.upper(2) - s);
    auto st = detail::classify_correlated_cell(cell, beta);
    if (!st)
        throw UnsupportedCellError("criterion_correlated: cell not in the admissible family");
    return detail::correlated_pair_criterion(*st, dim, s);
}

// Dispatch on the model kind. Additive has no closed form here.
inline double population_criterion(const ModelSpec& spec, const Cell& cell, int dim, double s) {
    switch (spec.kind) {
        case ModelKind::linear: return criterion_linear(cell, spec.alphas, dim, s);
        case ModelKind::multiplicative: return criterion_multiplicative(cell, spec.alpha, dim, s);
        case ModelKind::correlated:
            return criterion_correlated(cell, spec.beta, spec.alpha, dim, s);
        case ModelKind::additive:
            throw std::invalid_argument("population_criterion: no closed form for additive");
    }
    throw std::invalid_argument("population_criterion: unknown model");
}

// ===========================================================================
// Monte Carlo criterion oracle
// ===========================================================================

struct McResult {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_accepted = 0;
    double acceptance_rate = 1.0;
};

// Estimates the population criterion by conditioning the model's input law
// on the cell (rejection sampling where the law is not a product) and
// evaluating the empirical variance decrease of the noiseless m(X); the
// noise never enters the population criterion. The standard error comes
// from 32 batch means.
inline McResult mc_criterion(const ModelSpec& spec, const Cell& cell, int dim, double s,
                             std::size_t n_draws, std::uint64_t seed) {
    spec.validate();
    if (spec.kind == ModelKind::additive)
        throw std::invalid_argument("mc_criterion: supported models are linear, multiplicative, correlated");
    if (cell.dim() != spec.d) throw std::invalid_argument("mc_criterion: cell dimension mismatch");
    if (n_draws < 10000) throw std::invalid_argument("mc_criterion: n_draws must be >= 1e4");
    if (dim < 0 || static_cast<std::size_t>(dim) >= spec.d)
        throw std::invalid_argument("mc_criterion: dim out of range");
    if (!(cell.lower(dim) < s && s < cell.upper(dim)))
        throw std::invalid_argument("mc_criterion: s outside (a_j, b_j)");

    constexpr std::size_t kBatches = 32;
    const std::size_t per_batch = (n_draws + kBatches - 1) / kBatches;
    const std::size_t total = per_batch * kBatches;

    std::array<double, kBatches> sum_l{}, sum_r{};
    std::array<std::uint64_t, kBatches> cnt_l{}, cnt_r{};

    Rng rng(derive_seed(seed, StreamTag::mc, 0));
    std::vector<double> x(spec.d);

    const bool correlated = spec.kind == ModelKind::correlated;
    std::vector<int> candidate_blocks;
    double block_width = 1.0;
    if (correlated) {
        const int n_blocks = 1 << spec.beta;
        block_width = 1.0 / static_cast<double>(n_blocks);
        for (int i = 0; i < n_blocks; ++i) {
            const double lo = i * block_width, hi = (i + 1) * block_width;
            if (std::min(cell.upper(0), hi) > std::max(cell.lower(0), lo) &&
                std::min(cell.upper(1), hi) > std::max(cell.lower(1), lo))
                candidate_blocks.push_back(i);
        }
        if (candidate_blocks.empty())
            throw InfeasibleCellError("mc_criterion: cell has zero mass under the block law");
    }

    std::size_t accepted = 0;
    std::uint64_t proposals = 0;
    while (accepted < total) {
        ++proposals;
        if (correlated) {
            const double base =
                candidate_blocks[rng.below(candidate_blocks.size())] * block_width;
            x[0] = base + block_width * rng.uniform01();
            x[1] = base + block_width * rng.uniform01();
            x[2] = rng.uniform(cell.lower(2), cell.upper(2));
            if (x[0] < cell.lower(0) || x[0] >= cell.upper(0) || x[1] < cell.lower(1) ||
                x[1] >= cell.upper(1)) {
                if (proposals >= 1000000 && proposals % 1000000 == 0 &&
                    static_cast<double>(accepted) < 1e-4 * static_cast<double>(proposals))
                    throw InfeasibleCellError("mc_criterion: acceptance rate below 1e-4");
                continue;
            }
        } else {
            for (std::size_t j = 0; j < spec.d; ++j)
                x[j] = rng.uniform(cell.lower(j), cell.upper(j));
        }
        const double m = spec.mean_function(x);
        const std::size_t b = accepted / per_batch;
        if (x[dim] < s) {
            sum_l[b] += m;
            ++cnt_l[b];
        } else {
            sum_r[b] += m;
            ++cnt_r[b];
        }
        ++accepted;
    }

    // Criterion from means only: -E^2[m|A] + pL E^2[m|L] + pR E^2[m|R],
    // which coincides with the variance-difference form on the same sample.
    auto criterion_of = [](double sl, double sr, std::uint64_t nl, std::uint64_t nr) {
        const double n = static_cast<double>(nl + nr);
        const double ml = nl > 0 ? sl / static_cast<double>(nl) : 0.0;
        const double mr = nr > 0 ? sr / static_cast<double>(nr) : 0.0;
        const double ma = (sl + sr) / n;
        const double pl = static_cast<double>(nl) / n;
        return -ma * ma + pl * ml * ml + (1.0 - pl) * mr * mr;
    };

    McResult res;
    res.n_accepted = total;
    res.acceptance_rate = static_cast<double>(total) / static_cast<double>(proposals);
    double tsl = 0.0, tsr = 0.0;
    std::uint64_t tnl = 0, tnr = 0;
    std::array<double, kBatches> batch{};
    for (std::size_t b = 0; b < kBatches; ++b) {
        batch[b] = criterion_of(sum_l[b], sum_r[b], cnt_l[b], cnt_r[b]);
        tsl += sum_l[b];
        tsr += sum_r[b];
        tnl += cnt_l[b];
        tnr += cnt_r[b];
    }
    res.value = criterion_of(tsl, tsr, tnl, tnr);
    double bm = 0.0;
    for (double v : batch) bm += v;
    bm /= kBatches;
    double var = 0.0;
    for (double v : batch) var += (v - bm) * (v - bm);
    var /= (kBatches - 1);
    res.std_error = std::sqrt(var / kBatches);
    return res;
}

// ===========================================================================
// Theoretical trees
// ===========================================================================

struct PopulationSplit {
    Split split;
    double gain = 0.0;
};

namespace detail {

struct PathInfo {
    std::vector<int> counts;      // splits per dim on the path to this node
    std::vector<int> last_depth;  // most recent depth a dim was split at (-1 never)
};

// Per-dim best center split for a node of the theoretical tree.
struct DimOption {
    double gain = 0.0;
    double threshold = 0.0;
};

inline DimOption dim_option(const ModelSpec& spec, const Cell& cell, const CorrelatedState& st,
                            int dim) {
    DimOption opt;
    switch (spec.kind) {
        case ModelKind::linear: {
            const double w = cell.side(dim);
            opt.gain = 0.25 * spec.alphas[dim] * spec.alphas[dim] * (w / 2.0) * (w / 2.0);
            opt.threshold = 0.5 * (cell.lower(dim) + cell.upper(dim));
            break;
        }
        case ModelKind::multiplicative: {
            double prod = 1.0;
            for (std::size_t l = 0; l < cell.dim(); ++l)
                if (static_cast<int>(l) != dim)
                    prod *= (cell.lower(l) + cell.upper(l)) * (cell.lower(l) + cell.upper(l));
            const double w = cell.side(dim);
            opt.gain = 0.25 * spec.alpha * spec.alpha * w * w * prod;
            opt.threshold = 0.5 * (cell.lower(dim) + cell.upper(dim));
            break;
        }
        case ModelKind::correlated: {
            if (dim == 2) {
                const double w = cell.side(2);
                opt.gain = 0.25 * spec.alpha * spec.alpha * (w / 2.0) * (w / 2.0);
                opt.threshold = 0.5 * (cell.lower(2) + cell.upper(2));
            } else if (st.blocked()) {
                // splitting at the support center keeps a 1/4 gain at every
                // scale: len^2 * (root criterion at 1/2) with the root value
                // exactly 1/4 for any even block count
                const double len = st.s1_hi - st.s1_lo;
                opt.gain = 0.25 * len * len;
                opt.threshold = 0.5 * (st.s1_lo + st.s1_hi);
            } else {
                const double lo = dim == 0 ? st.s1_lo : st.s2_lo;
                const double hi = dim == 0 ? st.s1_hi : st.s2_hi;
                const double w = hi - lo;
                opt.gain = 0.25 * (w / 2.0) * (w / 2.0);
                opt.threshold = 0.5 * (lo + hi);
            }
            break;
        }
        case ModelKind::additive:
            throw std::invalid_argument("theoretical trees: no closed form for additive");
    }
    return opt;
}

// Ties on the gain argmax are resolved by: fewest splits on this path first,
// then the policy's index preference. A bare cell (empty path) therefore
// degrades to the pure index preference.
inline int resolve_tie(const std::vector<int>& ties, const PathInfo& path, TieBreak tb) {
    int best = ties.front();
    auto better = [&](int cand, int incumbent) {
        if (path.counts[cand] != path.counts[incumbent])
            return path.counts[cand] < path.counts[incumbent];
        switch (tb) {
            case TieBreak::prefer_low_dim: return cand < incumbent;
            case TieBreak::prefer_high_dim: return cand > incumbent;
            case TieBreak::round_robin:
                if (path.last_depth[cand] != path.last_depth[incumbent])
                    return path.last_depth[cand] < path.last_depth[incumbent];
                return cand < incumbent;
        }
        return false;
    };
    for (std::size_t i = 1; i < ties.size(); ++i)
        if (better(ties[i], best)) best = ties[i];
    return best;
}

}  // namespace detail

// Maximizes the population criterion over the candidate dims. All three
// closed-form models split at the center of the chosen variable's support.
inline PopulationSplit best_population_split(const ModelSpec& spec, const Cell& cell,
                                             std::span<const int> candidate_dims,
                                             TieBreak tie_break) {
    spec.validate();
    if (cell.dim() != spec.d)
        throw std::invalid_argument("best_population_split: cell dimension mismatch");
    if (candidate_dims.empty())
        throw std::invalid_argument("best_population_split: no candidate dims");
    if (spec.kind == ModelKind::correlated && spec.beta > 5)
        throw std::invalid_argument(
            "best_population_split: center splits are certified for beta in {0..5} only");

    CorrelatedState st;
    if (spec.kind == ModelKind::correlated) {
        auto cls = detail::classify_correlated_cell(cell, spec.beta);
        // center-split optimality holds on block runs of size 2^b only
        if (!cls || !detail::is_power_of_two(cls->n_blocks))
            throw UnsupportedCellError("best_population_split: cell not in the admissible family");
        st = *cls;
    }

    std::vector<detail::DimOption> opts;
    double best_gain = -1.0;
    for (int dim : candidate_dims) {
        if (dim < 0 || static_cast<std::size_t>(dim) >= spec.d)
            throw std::invalid_argument("best_population_split: dim out of range");
        opts.push_back(detail::dim_option(spec, cell, st, dim));
        best_gain = std::max(best_gain, opts.back().gain);
    }
    std::vector<int> ties;
    for (std::size_t i = 0; i < opts.size(); ++i)
        if (opts[i].gain == best_gain) ties.push_back(candidate_dims[i]);

    detail::PathInfo path;
    path.counts.assign(spec.d, 0);
    path.last_depth.assign(spec.d, -1);
    const int dim = detail::resolve_tie(ties, path, tie_break);
    for (std::size_t i = 0; i < opts.size(); ++i)
        if (candidate_dims[i] == dim) return {Split{dim, opts[i].threshold}, opts[i].gain};
    throw std::logic_error("best_population_split: unreachable");
}

struct TheoreticalNode {
    Cell cell;
    double p_star = 1.0;
    int depth = 0;
    std::optional<Split> split;
    double gain = 0.0;
    std::int32_t left = -1, right = -1;
    double mean_m = 0.0;       // E[m | cell]
    CorrelatedState corr;      // meaningful for the correlated model only

    bool is_leaf() const { return !split.has_value(); }
};

// Population tree grown with the closed-form criteria: every stored gain is
// recomputable from the criterion at the stored split.
struct TheoreticalTree {
    ModelSpec spec;
    TieBreak tie_break = TieBreak::prefer_low_dim;
    int max_depth = 0;
    std::vector<TheoreticalNode> nodes;
};

namespace detail {

inline double population_cell_mean(const ModelSpec& spec, const Cell& cell,
                                   const CorrelatedState& st) {
    switch (spec.kind) {
        case ModelKind::linear: {
            double m = 0.0;
            for (std::size_t j = 0; j < spec.d; ++j)
                m += spec.alphas[j] * 0.5 * (cell.lower(j) + cell.upper(j));
            return m;
        }
        case ModelKind::multiplicative: {
            double m = spec.alpha;
            for (std::size_t j = 0; j < spec.d; ++j) m *= cell.lower(j) + cell.upper(j);
            return m;
        }
        case ModelKind::correlated:
            return 0.5 * (st.s1_lo + st.s1_hi) + 0.5 * (st.s2_lo + st.s2_hi) +
                   spec.alpha * 0.5 * (cell.lower(2) + cell.upper(2));
        case ModelKind::additive: break;
    }
    throw std::invalid_argument("population_cell_mean: unsupported model");
}

// Conditional state of the children of a center split.
inline std::pair<CorrelatedState, CorrelatedState> split_correlated_state(
    const CorrelatedState& st, int dim, double z) {
    CorrelatedState l = st, r = st;
    if (dim == 2) return {l, r};
    if (st.blocked()) {
        // halving the block run halves both supports; one block left means
        // the children are plain uniform squares
        l.n_blocks = r.n_blocks = st.n_blocks / 2;
        l.s1_hi = l.s2_hi = z;
        r.s1_lo = r.s2_lo = z;
        return {l, r};
    }
    if (dim == 0) {
        l.s1_hi = z;
        r.s1_lo = z;
    } else {
        l.s2_hi = z;
        r.s2_lo = z;
    }
    return {l, r};
}

// Chooser: given the node and its per-dim options, returns the split dim or
// -1 to stop. Used to build both the policy trees and the two extreme trees
// behind the disagreement bounds.
struct TheoreticalNodeView {
    const Cell& cell;
    const CorrelatedState& corr;
    const PathInfo& path;
    int depth;
    std::span<const DimOption> options;
};
using DimChooser = std::function<int(const TheoreticalNodeView&)>;

inline TheoreticalTree build_theoretical_tree_impl(const ModelSpec& spec, int k,
                                                   TieBreak tie_break, const DimChooser& choose) {
    spec.validate();
    if (k < 0) throw std::invalid_argument("build_theoretical_tree: k must be >= 0");
    if (spec.kind == ModelKind::additive)
        throw std::invalid_argument("build_theoretical_tree: no closed form for additive");
    if (spec.kind == ModelKind::correlated && spec.beta > 5)
        throw std::invalid_argument("build_theoretical_tree: beta in {0..5} only");

    TheoreticalTree tree;
    tree.spec = spec;
    tree.tie_break = tie_break;
    tree.max_depth = k;

    std::vector<PathInfo> paths;  // parallel to nodes
    {
        TheoreticalNode root;
        root.cell = Cell::unit(spec.d);
        if (spec.kind == ModelKind::correlated) root.corr.n_blocks = 1 << spec.beta;
        root.mean_m = population_cell_mean(spec, root.cell, root.corr);
        tree.nodes.push_back(std::move(root));
        PathInfo p;
        p.counts.assign(spec.d, 0);
        p.last_depth.assign(spec.d, -1);
        paths.push_back(std::move(p));
    }

    std::deque<std::size_t> queue{0};
    std::vector<DimOption> opts(spec.d);
    while (!queue.empty()) {
        const std::size_t id = queue.front();
        queue.pop_front();
        if (tree.nodes[id].depth >= k) continue;

        for (std::size_t dim = 0; dim < spec.d; ++dim)
            opts[dim] = dim_option(spec, tree.nodes[id].cell, tree.nodes[id].corr,
                                   static_cast<int>(dim));
        TheoreticalNodeView view{tree.nodes[id].cell, tree.nodes[id].corr, paths[id],
                                 tree.nodes[id].depth, opts};
        const int dim = choose(view);
        if (dim < 0 || opts[dim].gain <= 0.0) continue;

        const Split split{dim, opts[dim].threshold};
        auto [cl, cr] = split_cell(tree.nodes[id].cell, split);
        auto [sl, sr] = split_correlated_state(tree.nodes[id].corr, dim, split.threshold);

        tree.nodes[id].split = split;
        tree.nodes[id].gain = opts[dim].gain;

        PathInfo child_path = paths[id];
        ++child_path.counts[dim];
        child_path.last_depth[dim] = tree.nodes[id].depth;

        for (int side = 0; side < 2; ++side) {
            TheoreticalNode child;
            child.cell = side == 0 ? std::move(cl) : std::move(cr);
            child.corr = side == 0 ? sl : sr;
            child.depth = tree.nodes[id].depth + 1;
            child.p_star = 0.5 * tree.nodes[id].p_star;  // center splits halve the mass
            child.mean_m = population_cell_mean(spec, child.cell, child.corr);
            const std::int32_t nid = static_cast<std::int32_t>(tree.nodes.size());
            (side == 0 ? tree.nodes[id].left : tree.nodes[id].right) = nid;
            tree.nodes.push_back(std::move(child));
            paths.push_back(child_path);
            queue.push_back(nid);
        }
    }
    return tree;
}

inline DimChooser policy_chooser(TieBreak tb) {
    return [tb](const TheoreticalNodeView& view) {
        double best = 0.0;
        for (const DimOption& o : view.options) best = std::max(best, o.gain);
        if (best <= 0.0) return -1;
        std::vector<int> ties;
        for (std::size_t d = 0; d < view.options.size(); ++d)
            if (view.options[d].gain == best) ties.push_back(static_cast<int>(d));
        return resolve_tie(ties, view.path, tb);
    };
}

// Path-free chooser (lowest dim on gain ties). The disagreement trees share
// this below their forced levels so that paired cells evolve identically.
inline int stateless_low_chooser(const TheoreticalNodeView& view) {
    double best = 0.0;
    int dim = -1;
    for (std::size_t d = 0; d < view.options.size(); ++d) {
        if (view.options[d].gain > best) {
            best = view.options[d].gain;
            dim = static_cast<int>(d);
        }
    }
    return dim;
}

}  // namespace detail

// Recursively applies the best population split down to depth k.
inline TheoreticalTree build_theoretical_tree(const ModelSpec& spec, int k, TieBreak tie_break) {
    return detail::build_theoretical_tree_impl(spec, k, tie_break,
                                               detail::policy_chooser(tie_break));
}

// Per-variable population MDI of the tree truncated at depth k: sums of
// p*_A times the stored gain over nodes split along each variable.
inline std::vector<double> population_mdi(const TheoreticalTree& tree, int k) {
    std::vector<double> mdi(tree.spec.d, 0.0);
    for (const TheoreticalNode& nd : tree.nodes) {
        if (nd.is_leaf() || nd.depth >= k) continue;
        mdi[nd.split->dim] += nd.p_star * nd.gain;
    }
    return mdi;
}

inline std::vector<double> population_mdi(const TheoreticalTree& tree) {
    return population_mdi(tree, tree.max_depth);
}

// ===========================================================================
// Extreme-tree disagreement
// ===========================================================================

// Gap between the importances of X1 produced by the two extreme theoretical
// trees of the relevant construction.
//
// multiplicative (d = 2): the two trees split the root along X1 resp. X2 and
// the opposite variable at depth 1; both reach the same quadrant partition,
// below which an identical deterministic sub-policy is used, so the gap is
// exactly alpha^2/16 at every k >= 2.
//
// correlated: while the pair law is blocked, one tree routes every pair
// split to X1, the other to X2; their uniform-phase subtrees coincide, so
// the gap converges to the blocked-phase total sum_{t<beta} 4^-t / 4.
inline double tree_disagreement(const ModelSpec& spec, int k) {
    spec.validate();
    if (spec.kind == ModelKind::multiplicative) {
        if (spec.d != 2)
            throw std::invalid_argument("tree_disagreement: multiplicative requires d = 2");
        if (k < 2) throw std::invalid_argument("tree_disagreement: multiplicative requires k >= 2");
        auto chooser = [](int root_dim) {
            return detail::DimChooser([root_dim](const detail::TheoreticalNodeView& v) {
                if (v.depth == 0) return root_dim;
                if (v.depth == 1) return 1 - root_dim;
                return detail::stateless_low_chooser(v);
            });
        };
        auto t_low = detail::build_theoretical_tree_impl(spec, k, TieBreak::prefer_low_dim,
                                                         chooser(0));
        auto t_high = detail::build_theoretical_tree_impl(spec, k, TieBreak::prefer_high_dim,
                                                          chooser(1));
        return population_mdi(t_high)[0] - population_mdi(t_low)[0];
    }
    if (spec.kind == ModelKind::correlated) {
        if (k < 0) throw std::invalid_argument("tree_disagreement: k must be >= 0");
        auto chooser = [](int pair_dim) {
            return detail::DimChooser([pair_dim](const detail::TheoreticalNodeView& v) {
                if (v.corr.blocked() && v.options[0].gain >= v.options[2].gain) return pair_dim;
                return detail::stateless_low_chooser(v);
            });
        };
        auto t_first = detail::build_theoretical_tree_impl(spec, k, TieBreak::prefer_low_dim,
                                                           chooser(0));
        auto t_second = detail::build_theoretical_tree_impl(spec, k, TieBreak::prefer_high_dim,
                                                            chooser(1));
        return population_mdi(t_first)[0] - population_mdi(t_second)[0];
    }
    throw std::invalid_argument("tree_disagreement: model must be multiplicative or correlated");
}

// ===========================================================================
// Center-split grid certification (correlated model)
// ===========================================================================

struct CenterSplitCertificate {
    int beta = 0;
    bool certified = false;
    double center_value = 0.0;  // criterion at s = 1/2
    double m_beta = 0.0;        // criterion at the central-interval edge
    double pitch = 0.0;
    std::size_t n_grid = 0;
    std::size_t n_outside = 0;  // grid points outside the central interval
    std::vector<double> offenders;
};

// Certifies numerically that the root criterion's maximum lies in the
// central interval [1/2 - 2^-beta, 1/2 + 2^-beta]: on a grid with pitch
// (1/4 - m_beta) / sup|dL/ds|, every point outside the interval must stay
// strictly below the edge value m_beta. Inside the interval the criterion
// is increasing up to the center, where it equals 1/4. beta = 0 needs no
// grid: the criterion is the exact parabola s(1-s)/4, maximal at 1/2.
inline CenterSplitCertificate grid_verify_center_split(int beta) {
    if (beta < 0 || beta > 5)
        throw std::invalid_argument("grid_verify_center_split: beta must be in {0..5}");
    CenterSplitCertificate cert;
    cert.beta = beta;
    const int n_blocks = 1 << beta;
    cert.center_value = block_root_criterion(n_blocks, 0.5);
    if (beta == 0) {
        cert.m_beta = std::numeric_limits<double>::quiet_NaN();
        cert.certified = true;
        return cert;
    }
    const double half_width = std::exp2(-beta);
    cert.m_beta = block_root_criterion(n_blocks, 0.5 - half_width);
    const double deriv_bound = 6.0 + 12.0 * std::exp2(2.0 * beta);
    cert.pitch = (0.25 - cert.m_beta) / deriv_bound;

    bool ok = std::abs(cert.center_value - 0.25) <= 1e-12;
    const std::size_t count = static_cast<std::size_t>(1.0 / cert.pitch);
    for (std::size_t i = 1; i <= count; ++i) {
        const double s = static_cast<double>(i) * cert.pitch;
        if (s >= 1.0) break;
        ++cert.n_grid;
        const double v = block_root_criterion(n_blocks, s);
        if (std::abs(s - 0.5) <= half_width) {
            if (!(v <= 0.25 + 1e-12)) {  // nothing in the interval may beat the center
                ok = false;
                if (cert.offenders.size() < 16) cert.offenders.push_back(s);
            }
            continue;
        }
        ++cert.n_outside;
        if (!(v < cert.m_beta)) {
            ok = false;
            if (cert.offenders.size() < 16) cert.offenders.push_back(s);
        }
    }
    cert.certified = ok;
    return cert;
}

// Same line format as empirical trees, with p_star in place of the count.
inline void write_tree(const TheoreticalTree& tree, std::ostream& os) {
    std::string buf, pfield;
    std::vector<std::size_t> stack{0};
    while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        const TheoreticalNode& nd = tree.nodes[id];
        pfield.clear();
        detail::format_double(pfield, nd.p_star);
        detail::write_node_line(buf, nd.depth, nd.split, nd.gain, pfield, nd.mean_m);
        if (!nd.is_leaf()) {
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        }
    }
    os << buf;
}

inline std::string tree_to_string(const TheoreticalTree& tree) {
    std::ostringstream os;
    write_tree(tree, os);
    return os.str();
}

}  // namespace mdicart
