#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mdicart {

// A split is a (dimension, threshold) pair. Dimensions are 0-based in code;
// all user-facing reports print them 1-based.
struct Split {
    int dim = 0;
    double threshold = 0.0;
};

// Axis-aligned hyperrectangle inside the unit cube. Sides are half-open
// [lo, hi) except that the outer boundary hi == 1 is inclusive, so the unit
// cube covers every sample and the children of a split partition it exactly.
class Cell {
public:
    Cell() = default;

    Cell(std::vector<double> lower, std::vector<double> upper)
        : lo_(std::move(lower)), hi_(std::move(upper)) {
        if (lo_.empty() || lo_.size() != hi_.size())
            throw std::invalid_argument("Cell: dimension mismatch or empty bounds");
        for (std::size_t j = 0; j < lo_.size(); ++j) {
            if (!(0.0 <= lo_[j] && lo_[j] < hi_[j] && hi_[j] <= 1.0))
                throw std::invalid_argument("Cell: requires 0 <= lo < hi <= 1 per side");
        }
    }

    static Cell unit(std::size_t d) {
        return Cell(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));
    }

    std::size_t dim() const { return lo_.size(); }
    double lower(std::size_t j) const { return lo_[j]; }
    double upper(std::size_t j) const { return hi_[j]; }
    double side(std::size_t j) const { return hi_[j] - lo_[j]; }

    double volume() const {
        double v = 1.0;
        for (std::size_t j = 0; j < dim(); ++j) v *= side(j);
        return v;
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != dim()) throw std::invalid_argument("Cell::contains: dimension mismatch");
        for (std::size_t j = 0; j < dim(); ++j) {
            if (x[j] < lo_[j]) return false;
            if (x[j] >= hi_[j] && !(hi_[j] == 1.0 && x[j] == 1.0)) return false;
        }
        return true;
    }

    const std::vector<double>& lower_bounds() const { return lo_; }
    const std::vector<double>& upper_bounds() const { return hi_; }

private:
    std::vector<double> lo_, hi_;
};

// Splits a cell along split.dim at split.threshold; the threshold must lie
// strictly inside the side. Only that side changes in the children.
inline std::pair<Cell, Cell> split_cell(const Cell& cell, const Split& split) {
    if (split.dim < 0 || static_cast<std::size_t>(split.dim) >= cell.dim())
        throw std::invalid_argument("split_cell: dimension out of range");
    const std::size_t j = static_cast<std::size_t>(split.dim);
    if (!(cell.lower(j) < split.threshold && split.threshold < cell.upper(j)))
        throw std::invalid_argument("split_cell: threshold not strictly inside the cell side");
    std::vector<double> lo = cell.lower_bounds(), hi = cell.upper_bounds();
    hi[j] = split.threshold;
    Cell left(lo, hi);
    lo[j] = split.threshold;
    hi[j] = cell.upper(j);
    Cell right(std::move(lo), std::move(hi));
    return {std::move(left), std::move(right)};
}

inline bool contains(const Cell& cell, std::span<const double> x) { return cell.contains(x); }

}  // namespace mdicart
