#pragma once

// Fitting front-end shared by the CLI and the simulation experiments.

#include "mmfit/core.hpp"
#include "mmfit/exact.hpp"
#include "mmfit/gibbs.hpp"
#include "mmfit/simulate.hpp"
#include "mmfit/weights.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mmfit {

enum class Engine { gibbs, exact };

struct FitOptions {
    Engine engine = Engine::gibbs;
    PriorConfig prior;
    ChainConfig chain;
    MlOptions ml;
};

/// Either engine's result for one model.
struct ModelFit {
    Engine engine = Engine::gibbs;
    std::optional<FitResult> gibbs;
    std::optional<MlFit> exact;

    /// Posterior means (gibbs) or ML estimates (exact).
    Eigen::VectorXd beta() const;
    std::vector<double> sigma2_u() const;
    double sigma2_e() const;
};

ModelFit fit_model(const ModelSpec& spec, const Dataset& data, const FitOptions& options);

/// Runs fn(0..n-1) over a pool of worker threads (hardware concurrency when
/// workers == 0). Each index is processed exactly once; the first exception
/// is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = 0);

struct BiasRow {
    std::size_t replicate = 0;
    std::vector<double> correct;   // per classification
    std::vector<double> collapsed; // per classification
    std::string error;             // non-empty when a fit failed

    bool ok() const noexcept { return error.empty(); }
};

struct BiasExperiment {
    std::vector<std::string> classifications;
    std::vector<BiasRow> rows;
    std::vector<double> mean_correct;
    std::vector<double> mean_collapsed;
    /// Fraction of successful replicates where collapsed < correct.
    std::vector<double> fraction_collapsed_below;
    std::size_t n_ok = 0;
};

/// For each replicate: simulate, fit the true multiple membership model and
/// the model with every classification collapsed to its largest-weight
/// cluster, and record the between-cluster variance estimates of both.
BiasExperiment run_bias_experiment(const SimConfig& base, std::size_t replicates, const FitOptions& options);

void write_bias_table(std::ostream& out, const BiasExperiment& experiment);

struct SchemeFit {
    std::string scheme; // "as-given" or "equal"
    ModelSpec spec;
    ModelFit fit;
};

std::string scheme_name(WeightScheme scheme);
WeightScheme parse_scheme(const std::string& name);

/// Fits the model once per weighting scheme (applied to every classification).
std::vector<SchemeFit> run_sensitivity(const ModelSpec& spec, const Dataset& data,
                                       const std::vector<WeightScheme>& schemes, const FitOptions& options);

struct SensitivityExperiment {
    std::vector<WeightScheme> schemes;
    /// [replicate][scheme] estimate of the first classification's variance.
    std::vector<std::vector<double>> estimates;
    std::vector<double> mean_abs_error; // per scheme, against the true variance
    double truth = 0.0;
};

/// Simulates under cfg (typically random-proportion weights) and compares
/// how well each scheme recovers the first classification's variance.
SensitivityExperiment run_sensitivity_experiment(const SimConfig& base, std::size_t replicates,
                                                 const std::vector<WeightScheme>& schemes,
                                                 const FitOptions& options);

} // namespace mmfit
