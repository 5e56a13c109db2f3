#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "mdicart/cart.hpp"
#include "mdicart/dataset.hpp"

namespace mdicart {

// Per-variable importance of one tree plus the bookkeeping that ties it to
// the output variance: V[Y] = sum_j MDI_j + risk holds exactly, so
// identity_residual is a pure floating-point diagnostic.
struct MdiReport {
    std::vector<double> per_variable;
    double total_mdi = 0.0;
    double empirical_variance_y = 0.0;
    double risk = 0.0;
    double r_squared = 0.0;
    double identity_residual = 0.0;
};

// Mean squared training residual of the tree's predictions.
inline double empirical_risk(const Tree& tree, const Dataset& data) {
    if (data.d != tree.dim) throw std::invalid_argument("empirical_risk: dimension mismatch");
    double ss = 0.0;
    for (std::size_t i = 0; i < data.n; ++i) {
        const double r = data.y[i] - predict(tree, data.row(i));
        ss += r * r;
    }
    return ss / static_cast<double>(data.n);
}

// Sums probability-weighted stored gains per split variable. The weights are
// the in-sample cell fractions N(A)/n, so truncations reuse fitted gains and
// the variance identity holds without recomputation.
inline MdiReport empirical_mdi(const Tree& tree, const Dataset& data) {
    if (data.n != tree.training_n || data.d != tree.dim)
        throw std::invalid_argument("empirical_mdi: tree was not fitted on this dataset");
    MdiReport rep;
    rep.per_variable.assign(tree.dim, 0.0);
    const double n = static_cast<double>(data.n);
    for (const TreeNode& nd : tree.nodes) {
        if (nd.is_leaf()) continue;
        rep.per_variable[nd.split->dim] += (static_cast<double>(nd.n_samples()) / n) * nd.gain;
    }
    for (double v : rep.per_variable) rep.total_mdi += v;
    rep.empirical_variance_y = detail::biased_variance(data.y);
    rep.risk = empirical_risk(tree, data);
    rep.identity_residual = rep.empirical_variance_y - rep.total_mdi - rep.risk;
    rep.r_squared = rep.empirical_variance_y > 0.0 ? rep.total_mdi / rep.empirical_variance_y : 0.0;
    return rep;
}

// (sum of importances inside the group, sum outside). Group indices are
// 1-based, matching reports.
inline std::pair<double, double> group_mdi(const MdiReport& rep, const std::vector<int>& group) {
    std::vector<bool> in(rep.per_variable.size(), false);
    for (int j : group) {
        if (j < 1 || static_cast<std::size_t>(j) > rep.per_variable.size())
            throw std::out_of_range("group_mdi: variable index out of range");
        in[j - 1] = true;
    }
    double inside = 0.0, outside = 0.0;
    for (std::size_t j = 0; j < rep.per_variable.size(); ++j)
        (in[j] ? inside : outside) += rep.per_variable[j];
    return {inside, outside};
}

// `variable,importance` rows followed by footer rows for the identity terms.
inline void write_mdi_csv(const MdiReport& rep, std::ostream& os) {
    std::string buf = "variable,importance\n";
    for (std::size_t j = 0; j < rep.per_variable.size(); ++j) {
        buf += std::to_string(j + 1);
        buf += ',';
        detail::format_double(buf, rep.per_variable[j]);
        buf += '\n';
    }
    auto footer = [&buf](const char* key, double v) {
        buf += key;
        buf += ',';
        detail::format_double(buf, v);
        buf += '\n';
    };
    footer("__risk__", rep.risk);
    footer("__total__", rep.total_mdi);
    footer("__vary__", rep.empirical_variance_y);
    footer("__residual__", rep.identity_residual);
    os << buf;
}

}  // namespace mdicart
