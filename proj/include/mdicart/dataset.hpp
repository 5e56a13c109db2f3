#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace mdicart {

// Regression sample: n x d inputs in [0,1]^d (row-major) plus responses.
struct Dataset {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> x;  // row-major, size n*d
    std::vector<double> y;  // size n

    Dataset() = default;
    Dataset(std::size_t n_, std::size_t d_)
        : n(n_), d(d_), x(n_ * d_, 0.0), y(n_, 0.0) {}

    double xat(std::size_t i, std::size_t j) const { return x[i * d + j]; }
    double& xat(std::size_t i, std::size_t j) { return x[i * d + j]; }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * d, d}; }

    void validate() const {
        if (n == 0 || d == 0) throw std::invalid_argument("Dataset: n and d must be >= 1");
        if (x.size() != n * d || y.size() != n)
            throw std::invalid_argument("Dataset: inconsistent storage sizes");
        for (double v : x)
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("Dataset: input entry outside [0,1]");
    }
};

namespace detail {

inline void format_double(std::string& out, double v) {
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
    out.append(buf, res.ptr);
}

inline double parse_double(std::string_view tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw std::runtime_error("CSV: malformed numeric field '" + std::string(tok) + "'");
    return v;
}

}  // namespace detail

// Header `x1,...,xd,y`; values printed in shortest round-trip decimal form,
// so write -> read reproduces the dataset bit-for-bit.
inline void write_csv(const Dataset& data, std::ostream& os) {
    std::string line;
    for (std::size_t j = 1; j <= data.d; ++j) line += "x" + std::to_string(j) + ",";
    line += "y\n";
    os << line;
    for (std::size_t i = 0; i < data.n; ++i) {
        line.clear();
        for (std::size_t j = 0; j < data.d; ++j) {
            detail::format_double(line, data.xat(i, j));
            line += ',';
        }
        detail::format_double(line, data.y[i]);
        line += '\n';
        os << line;
    }
}

inline void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    write_csv(data, os);
}

inline Dataset read_csv(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("CSV: empty input");
    std::size_t d = 0;
    {
        std::stringstream hs(header);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(hs, col, ',')) cols.push_back(col);
        if (cols.size() < 2 || cols.back() != "y")
            throw std::runtime_error("CSV: expected header x1,...,xd,y");
        d = cols.size() - 1;
        for (std::size_t j = 0; j < d; ++j)
            if (cols[j] != "x" + std::to_string(j + 1))
                throw std::runtime_error("CSV: expected header x1,...,xd,y");
    }
    Dataset data;
    data.d = d;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0, field = 0;
        while (field <= d) {
            std::size_t next = line.find(',', pos);
            std::string_view tok(line.data() + pos,
                                 (next == std::string::npos ? line.size() : next) - pos);
            double v = detail::parse_double(tok);
            if (field < d)
                data.x.push_back(v);
            else
                data.y.push_back(v);
            if (next == std::string::npos) break;
            pos = next + 1;
            ++field;
        }
        if (field != d) throw std::runtime_error("CSV: wrong field count in row");
        ++data.n;
    }
    data.validate();
    return data;
}

inline Dataset read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_csv: cannot open " + path);
    return read_csv(is);
}

// Materializes the dataset restricted to `indices` (with repetition allowed),
// e.g. a bootstrap resample.
inline Dataset subsample(const Dataset& data, std::span<const std::uint32_t> indices) {
    Dataset out(indices.size(), data.d);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t s = indices[i];
        for (std::size_t j = 0; j < data.d; ++j) out.xat(i, j) = data.xat(s, j);
        out.y[i] = data.y[s];
    }
    return out;
}

}  // namespace mdicart
