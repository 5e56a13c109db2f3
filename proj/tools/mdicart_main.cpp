// Experiment harness for the CART/MDI engine: one subcommand per study,
// each emitting a reproducible CSV (config echo + data rows) and, with
// --check, exiting 2 when a pinned tolerance fails.

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "mdicart/mdicart.hpp"

namespace {

struct CliOptions {
    std::string model = "linear";
    std::vector<double> alpha = {1.0};
    std::vector<std::string> components;
    double sigma = 0.0;
    int beta = 1;
    std::size_t d = 2;
    mdicart::ExperimentConfig cfg;
};

mdicart::ComponentFn parse_component(const std::string& name) {
    if (name == "identity") return mdicart::ComponentFn::identity;
    if (name == "centered_square") return mdicart::ComponentFn::centered_square;
    if (name == "sine") return mdicart::ComponentFn::sine;
    throw CLI::ValidationError("--components",
                               "unknown component '" + name +
                                   "' (choose identity, centered_square, sine)");
}

mdicart::ModelSpec build_model(const CliOptions& o) {
    if (o.model == "linear") {
        std::vector<double> coeffs = o.alpha;
        if (coeffs.size() == 1 && o.d > 1) coeffs.assign(o.d, o.alpha[0]);
        return mdicart::ModelSpec::linear_model(coeffs, o.sigma);
    }
    if (o.model == "additive") {
        std::vector<mdicart::ComponentFn> fns;
        for (const std::string& c : o.components) fns.push_back(parse_component(c));
        if (fns.empty()) fns.assign(o.d, mdicart::ComponentFn::identity);
        return mdicart::ModelSpec::additive_model(fns, o.sigma);
    }
    if (o.model == "multiplicative")
        return mdicart::ModelSpec::multiplicative_model(o.alpha[0], o.d, o.sigma);
    if (o.model == "correlated")
        return mdicart::ModelSpec::correlated_model(o.alpha[0], o.beta, o.sigma);
    throw CLI::ValidationError("--model", "unknown model '" + o.model + "'");
}

void add_common_flags(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--alpha", o.alpha, "model coefficient(s)");
    cmd->add_option("--sigma", o.sigma, "noise standard deviation");
    cmd->add_option("--beta", o.beta, "diagonal-blocks exponent (correlated)");
    cmd->add_option("--d", o.d, "input dimension");
    cmd->add_option("--n", o.cfg.n, "sample size");
    cmd->add_option("--trees", o.cfg.n_trees, "number of trees");
    cmd->add_option("--depth", o.cfg.depth, "depth cap k (-1 = grow fully)");
    cmd->add_option("--nodesize", o.cfg.nodesize, "max samples per leaf before splitting stops");
    cmd->add_option("--mtry", o.cfg.mtry, "candidate dims per node (0 = default)");
    cmd->add_option("--seed", o.cfg.seed, "master seed");
    cmd->add_option("--reps", o.cfg.reps, "repetitions");
    cmd->add_option("--out", o.cfg.out, "output CSV path (default stdout)");
    cmd->add_option("--threads", o.cfg.n_threads, "worker threads (0 = hardware)");
    cmd->add_flag("--check", o.cfg.check, "verify pinned tolerances; exit 2 on failure");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CART / random-forest MDI engine with population oracles"};
    app.set_version_flag("--version", std::string(mdicart::kVersion));
    app.require_subcommand(1);

    CliOptions o;

    CLI::App* decompose =
        app.add_subcommand("decompose", "variance decomposition by truncation depth");
    add_common_flags(decompose, o);
    decompose->add_option("--model", o.model, "generative model")
        ->check(CLI::IsMember({"linear", "additive", "multiplicative", "correlated"}));
    decompose->add_option("--data", o.cfg.data, "CSV dataset (header x1,...,xd,y)");

    CLI::App* linear = app.add_subcommand("linear", "per-variable MDI under the linear model");
    add_common_flags(linear, o);

    CLI::App* additive =
        app.add_subcommand("additive", "per-variable MDI under the additive model");
    add_common_flags(additive, o);
    additive->add_option("--components", o.components,
                         "per-dim component functions (identity, centered_square, sine)");

    CLI::App* multiplicative =
        app.add_subcommand("multiplicative", "MDI sum and disagreement under interactions");
    add_common_flags(multiplicative, o);

    CLI::App* correlated =
        app.add_subcommand("correlated", "group MDI under the dependent-inputs model");
    add_common_flags(correlated, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return mdicart::kExitError;
    }

    try {
        if (decompose->parsed()) {
            o.cfg.model = build_model(o);
            if (!decompose->count("--depth")) o.cfg.depth = -1;
            return mdicart::run_decompose(o.cfg);
        }
        if (linear->parsed()) {
            o.model = "linear";
            o.cfg.model = build_model(o);
            return mdicart::run_additive_linear(o.cfg);
        }
        if (additive->parsed()) {
            o.model = "additive";
            o.cfg.model = build_model(o);
            return mdicart::run_additive_linear(o.cfg);
        }
        if (multiplicative->parsed()) {
            o.model = "multiplicative";
            o.cfg.model = build_model(o);
            return mdicart::run_multiplicative(o.cfg);
        }
        if (correlated->parsed()) {
            o.model = "correlated";
            o.d = 3;
            o.cfg.model = build_model(o);
            return mdicart::run_correlated(o.cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mdicart::kExitError;
    }
    return mdicart::kExitError;
}
