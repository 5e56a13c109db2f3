#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdicart/dataset.hpp"
#include "mdicart/rng.hpp"

namespace mdicart {

enum class ModelKind { additive, linear, multiplicative, correlated };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::additive: return "additive";
        case ModelKind::linear: return "linear";
        case ModelKind::multiplicative: return "multiplicative";
        case ModelKind::correlated: return "correlated";
    }
    return "?";
}

// Univariate component catalog for the additive model. Variances are the
// analytic values; the test suite re-derives them by midpoint quadrature
// before trusting them anywhere else.
enum class ComponentFn { identity, centered_square, sine };

inline double component_value(ComponentFn f, double x) {
    switch (f) {
        case ComponentFn::identity: return x;
        case ComponentFn::centered_square: return (x - 0.5) * (x - 0.5);
        case ComponentFn::sine: return std::sin(6.283185307179586476925286766559 * x);
    }
    return 0.0;
}

inline double component_variance(ComponentFn f) {
    switch (f) {
        case ComponentFn::identity: return 1.0 / 12.0;
        case ComponentFn::centered_square: return 1.0 / 180.0;
        case ComponentFn::sine: return 0.5;
    }
    return 0.0;
}

inline const char* to_string(ComponentFn f) {
    switch (f) {
        case ComponentFn::identity: return "identity";
        case ComponentFn::centered_square: return "centered_square";
        case ComponentFn::sine: return "sine";
    }
    return "?";
}

// Synthetic generative model:
//   additive        y = sum_j f_j(x_j) + eps,          x ~ U([0,1]^d)
//   linear          y = sum_j alpha_j x_j + eps,       x ~ U([0,1]^d)
//   multiplicative  y = 2^d alpha prod_j x_j + eps,    x ~ U([0,1]^d)
//   correlated      y = x1 + x2 + alpha x3 + eps,      (x1,x2) diagonal-blocks(beta),
//                                                      x3 ~ U([0,1]) independent
// eps ~ N(0, sigma^2) via the pinned normal_bm1 routine.
struct ModelSpec {
    ModelKind kind = ModelKind::linear;
    std::vector<double> alphas;             // linear: one per dim
    double alpha = 0.0;                     // multiplicative / correlated scalar
    double sigma = 0.0;
    int beta = 0;                           // correlated block exponent
    std::size_t d = 0;
    std::vector<ComponentFn> components;    // additive only

    static ModelSpec linear_model(std::vector<double> coeffs, double sigma = 0.0) {
        ModelSpec s;
        s.kind = ModelKind::linear;
        s.d = coeffs.size();
        s.alphas = std::move(coeffs);
        s.sigma = sigma;
        s.validate();
        return s;
    }

    static ModelSpec additive_model(std::vector<ComponentFn> fns, double sigma = 0.0) {
        ModelSpec s;
        s.kind = ModelKind::additive;
        s.d = fns.size();
        s.components = std::move(fns);
        s.sigma = sigma;
        s.validate();
        return s;
    }

    static ModelSpec multiplicative_model(double alpha, std::size_t d, double sigma = 0.0) {
        ModelSpec s;
        s.kind = ModelKind::multiplicative;
        s.alpha = alpha;
        s.d = d;
        s.sigma = sigma;
        s.validate();
        return s;
    }

    static ModelSpec correlated_model(double alpha, int beta, double sigma = 0.0) {
        ModelSpec s;
        s.kind = ModelKind::correlated;
        s.alpha = alpha;
        s.beta = beta;
        s.d = 3;
        s.sigma = sigma;
        s.validate();
        return s;
    }

    void validate() const {
        if (d == 0) throw std::invalid_argument("ModelSpec: d must be >= 1");
        if (sigma < 0.0) throw std::invalid_argument("ModelSpec: sigma must be >= 0");
        if (beta < 0) throw std::invalid_argument("ModelSpec: beta must be >= 0");
        switch (kind) {
            case ModelKind::linear:
                if (alphas.size() != d)
                    throw std::invalid_argument("ModelSpec: linear needs one alpha per dim");
                break;
            case ModelKind::additive:
                if (components.size() != d)
                    throw std::invalid_argument("ModelSpec: additive needs one component per dim");
                break;
            case ModelKind::multiplicative:
                break;
            case ModelKind::correlated:
                if (d != 3) throw std::invalid_argument("ModelSpec: correlated fixes d = 3");
                break;
        }
    }

    // Noiseless regression function m(x).
    double mean_function(std::span<const double> x) const {
        if (x.size() != d) throw std::invalid_argument("mean_function: dimension mismatch");
        switch (kind) {
            case ModelKind::linear: {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) s += alphas[j] * x[j];
                return s;
            }
            case ModelKind::additive: {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) s += component_value(components[j], x[j]);
                return s;
            }
            case ModelKind::multiplicative: {
                double p = alpha;
                for (std::size_t j = 0; j < d; ++j) p *= 2.0 * x[j];
                return p;
            }
            case ModelKind::correlated:
                return x[0] + x[1] + alpha * x[2];
        }
        return 0.0;
    }
};

// i.i.d. uniform draws on [0,1]^d, row-major.
inline std::vector<double> sample_uniform_cube(std::size_t n, std::size_t d, std::uint64_t seed) {
    if (n == 0 || d == 0) throw std::invalid_argument("sample_uniform_cube: n, d must be >= 1");
    Rng rng(seed);
    std::vector<double> out(n * d);
    for (double& v : out) v = rng.uniform01();
    return out;
}

// Diagonal-blocks law on [0,1]^2: pick one of 2^beta equal squares along the
// diagonal uniformly, then draw both coordinates uniformly inside it.
inline std::vector<double> sample_diagonal_blocks(std::size_t n, int beta, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_diagonal_blocks: n must be >= 1");
    if (beta < 0) throw std::invalid_argument("sample_diagonal_blocks: beta must be >= 0");
    const std::size_t n_blocks = std::size_t{1} << beta;
    const double width = 1.0 / static_cast<double>(n_blocks);
    Rng rng(seed);
    std::vector<double> out(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double base = static_cast<double>(rng.below(n_blocks)) * width;
        out[2 * i] = base + width * rng.uniform01();
        out[2 * i + 1] = base + width * rng.uniform01();
    }
    return out;
}

// corr(X1, X2) = 1 - 4^-beta for the diagonal-blocks law.
inline double theoretical_correlation(int beta) {
    if (beta < 0) throw std::invalid_argument("theoretical_correlation: beta must be >= 0");
    return 1.0 - std::exp2(-2.0 * beta);
}

// Draws a dataset from the model. The input draw and the noise draw use
// separately derived streams, so changing sigma never changes x.
inline Dataset generate(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw std::invalid_argument("generate: n must be >= 1");
    Dataset data(n, spec.d);
    if (spec.kind == ModelKind::correlated) {
        const std::vector<double> blocks =
            sample_diagonal_blocks(n, spec.beta, derive_seed(seed, StreamTag::inputs, 0));
        Rng x3(derive_seed(seed, StreamTag::inputs, 1));
        for (std::size_t i = 0; i < n; ++i) {
            data.xat(i, 0) = blocks[2 * i];
            data.xat(i, 1) = blocks[2 * i + 1];
            data.xat(i, 2) = x3.uniform01();
        }
    } else {
        data.x = sample_uniform_cube(n, spec.d, derive_seed(seed, StreamTag::inputs, 0));
    }
    Rng noise(derive_seed(seed, StreamTag::noise, 0));
    for (std::size_t i = 0; i < n; ++i) {
        double eps = spec.sigma > 0.0 ? spec.sigma * noise.normal01() : 0.0;
        data.y[i] = spec.mean_function(data.row(i)) + eps;
    }
    return data;
}

// Analytic variance decomposition of m(X) where the model admits one.
struct VarianceReport {
    double total = 0.0;
    std::vector<std::optional<double>> per_variable;  // V[m_j(X_j)] where defined
    std::optional<double> group_first_two;            // correlated: V[X1 + X2]
};

inline double correlated_group_variance(int beta) {
    // V[X1 + X2] = 2/12 + 2 cov = 1/3 - 4^-beta / 6
    return 1.0 / 3.0 - std::exp2(-2.0 * beta) / 6.0;
}

inline VarianceReport population_variance(const ModelSpec& spec) {
    spec.validate();
    VarianceReport rep;
    rep.per_variable.assign(spec.d, std::nullopt);
    switch (spec.kind) {
        case ModelKind::linear:
            for (std::size_t j = 0; j < spec.d; ++j) {
                rep.per_variable[j] = spec.alphas[j] * spec.alphas[j] / 12.0;
                rep.total += *rep.per_variable[j];
            }
            break;
        case ModelKind::additive:
            for (std::size_t j = 0; j < spec.d; ++j) {
                rep.per_variable[j] = component_variance(spec.components[j]);
                rep.total += *rep.per_variable[j];
            }
            break;
        case ModelKind::multiplicative:
            // E[m] = alpha, E[m^2] = alpha^2 (4/3)^d
            rep.total = spec.alpha * spec.alpha *
                        (std::pow(4.0 / 3.0, static_cast<double>(spec.d)) - 1.0);
            break;
        case ModelKind::correlated:
            rep.group_first_two = correlated_group_variance(spec.beta);
            rep.per_variable[2] = spec.alpha * spec.alpha / 12.0;
            rep.total = *rep.group_first_two + *rep.per_variable[2];
            break;
    }
    return rep;
}

}  // namespace mdicart
