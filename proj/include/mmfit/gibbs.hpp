#pragma once

// Gibbs sampling for Gaussian multiple membership models with any number of
// random classifications.
//
// Model:  y_i = x_i' beta + sum_c sum_{j in c(i)} w^(c)_ji u^(c)_j + e_i
//         u^(c)_j ~ N(0, sigma2_c),  e_i ~ N(0, sigma2_e)
// Priors: flat on beta, InvGamma(shape, rate) on every variance.
//
// Each sweep updates beta (block), then every u^(c)_j one at a time in
// classification order and ascending cluster index, then the variances.

#include "mmfit/core.hpp"
#include "mmfit/diagnostics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mmfit {

struct PriorConfig {
    double shape = 0.001;
    double rate = 0.001;
};

struct ChainConfig {
    std::size_t burn_in = 500;
    std::size_t iterations = 5000;
    std::size_t thin = 1;
    std::size_t n_chains = 2;
    std::uint64_t seed = 1;
    bool store_u = false;
};

struct NormalParams {
    double mean = 0.0;
    double variance = 0.0;
};

struct MvNormalParams {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

struct InvGammaParams {
    double shape = 0.0;
    double rate = 0.0;

    double mean() const { return rate / (shape - 1.0); }
    double variance() const { return rate * rate / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0)); }
};

struct VarianceConditionals {
    std::vector<InvGammaParams> sigma2_u;
    InvGammaParams sigma2_e;
};

/// u_j | rest: precision 1/sigma2_u + sum_w2/sigma2_e, mean sum_w_resid/sigma2_e/precision,
/// where sum_w_resid = sum_i w_ji r_i with r_i the residual excluding u_j.
NormalParams cluster_effect_conditional(double sigma2_u, double sigma2_e, double sum_w2, double sum_w_resid);

/// InvGamma(shape + count/2, rate + sum_squares/2).
InvGammaParams variance_conditional(const PriorConfig& prior, std::size_t count, double sum_squares);

/// Precomputed, read-only view of a model and its data used by the sampler.
class GibbsProblem {
public:
    struct Member {
        std::size_t unit;
        double weight;
    };

    /// Throws Errc::singular_design when X lacks full column rank.
    GibbsProblem(ModelSpec spec, const Dataset& data);

    const ModelSpec& spec() const noexcept { return spec_; }
    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::VectorXd& y() const noexcept { return y_; }
    std::size_t n_units() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t n_beta() const noexcept { return static_cast<std::size_t>(X_.cols()); }
    std::size_t n_classifications() const noexcept { return members_.size(); }
    std::size_t n_clusters(std::size_t c) const noexcept { return members_[c].size(); }

    std::span<const Member> members(std::size_t c, std::size_t j) const { return members_[c][j]; }
    double sum_w2(std::size_t c, std::size_t j) const { return sum_w2_[c][j]; }
    const Eigen::MatrixXd& xtx() const noexcept { return xtx_; }
    const Eigen::LLT<Eigen::MatrixXd>& xtx_llt() const noexcept { return xtx_llt_; }

    /// beta | rest from X'r, where r = y minus all random-effect contributions.
    MvNormalParams beta_conditional(const Eigen::VectorXd& xtr, double sigma2_e) const;

    /// OLS beta, u = 0, sigma2_e = s2/2 and sigma2_c = s2/(2C) with s2 the
    /// OLS residual variance.
    Parameters initial_state() const;

    /// y - eta for the given parameters.
    Eigen::VectorXd residual(const Parameters& params) const;

private:
    ModelSpec spec_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd xtx_;
    Eigen::LLT<Eigen::MatrixXd> xtx_llt_;
    std::vector<std::vector<std::vector<Member>>> members_;
    std::vector<std::vector<double>> sum_w2_;
};

MvNormalParams full_conditional_beta(const GibbsProblem& problem, const Parameters& state);
NormalParams full_conditional_u(const GibbsProblem& problem, const Parameters& state, std::size_t classification,
                                std::size_t cluster);
VarianceConditionals full_conditional_variances(const GibbsProblem& problem, const Parameters& state,
                                                const PriorConfig& prior);

struct ParameterInfo {
    enum class Kind { beta, sigma2_u, sigma2_e, u };
    std::string name;
    std::string term;
    Kind kind;
    std::size_t classification = 0; // sigma2_u and u
    std::size_t index = 0;          // beta position or cluster index
};

struct ParameterSummary {
    std::string name;
    std::string term;
    DrawSummary stats;
};

struct ChainDraws {
    std::vector<std::size_t> iterations; // sweep number (1-based, burn-in included)
    Eigen::MatrixXd values;              // stored draws x parameters
};

struct VariancePartition {
    std::vector<std::string> classifications;
    /// sigma2_c / (sum_c sigma2_c + sigma2_e), summarized over draws.
    std::vector<DrawSummary> vpc;
    /// Per classification and unit: sigma2_c S_ci / (sum_c sigma2_c S_ci + sigma2_e)
    /// with S_ci = sum_j w_ji^2, evaluated at the posterior mean variances.
    std::vector<std::vector<double>> weighted_vpc;
};

struct FitResult {
    std::vector<ParameterInfo> parameters;
    std::vector<ChainDraws> chains;
    std::vector<ParameterSummary> summaries; // parallel to parameters
    VariancePartition partition;
    std::vector<std::string> warnings;

    std::size_t total_draws() const;
    std::size_t index_of(const std::string& name) const;
    const ParameterSummary& summary(const std::string& name) const { return summaries.at(index_of(name)); }
    /// Draws of one parameter, one vector per chain.
    std::vector<std::vector<double>> draws(std::size_t parameter) const;
};

/// Standard parameter names: beta_0 (intercept), beta_k, sigma2_u[<classification>],
/// sigma2_e, u[<classification>][<label>].
std::vector<ParameterInfo> parameter_layout(const ModelSpec& spec, bool include_u);

/// Runs chain_cfg.n_chains independent chains (concurrently) and merges
/// them in chain order. Deterministic given the seed.
FitResult run_gibbs(const ModelSpec& spec, const Dataset& data, const PriorConfig& prior = {},
                    const ChainConfig& chain_cfg = {});

} // namespace mmfit
