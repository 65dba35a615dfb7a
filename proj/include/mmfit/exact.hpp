#pragma once

// Exact marginal likelihood of the Gaussian multiple membership model,
//
//   y ~ N(X beta, V),   V = sum_c sigma2_c W_c W_c' + sigma2_e I,
//
// evaluated with a dense Cholesky factorization, and a maximum likelihood
// fitter over (beta, variances). Meant for small problems and as a reference
// for the sampler.

#include "mmfit/core.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace mmfit {

inline constexpr std::size_t kMaxDenseUnits = 10000;

class MarginalModel {
public:
    MarginalModel(Eigen::MatrixXd X, std::vector<Eigen::MatrixXd> W, Eigen::VectorXd y,
                  std::vector<std::string> names = {});

    static MarginalModel from_spec(const ModelSpec& spec, const Dataset& data);

    std::size_t n_units() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t n_beta() const noexcept { return static_cast<std::size_t>(X_.cols()); }
    std::size_t n_classifications() const noexcept { return W_.size(); }

    const Eigen::MatrixXd& X() const noexcept { return X_; }
    const Eigen::VectorXd& y() const noexcept { return y_; }
    const std::vector<Eigen::MatrixXd>& W() const noexcept { return W_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// V for the given variances (classifications first, then residual).
    Eigen::MatrixXd covariance(const std::vector<double>& sigma2_u, double sigma2_e) const;

private:
    Eigen::MatrixXd X_;
    std::vector<Eigen::MatrixXd> W_;
    std::vector<Eigen::MatrixXd> WWt_;
    Eigen::VectorXd y_;
    std::vector<std::string> names_;
};

struct VarianceComponents {
    std::vector<double> sigma2_u;
    double sigma2_e = 1.0;
};

/// Throws Errc::not_positive_definite when V cannot be factorized.
double log_likelihood(const MarginalModel& model, const Eigen::VectorXd& beta, const VarianceComponents& v);

struct LikelihoodGradient {
    Eigen::VectorXd beta;         // X' V^{-1} (y - X beta)
    Eigen::VectorXd log_variance; // d/d log(sigma2), classifications first, residual last
};

LikelihoodGradient log_likelihood_gradient(const MarginalModel& model, const Eigen::VectorXd& beta,
                                           const VarianceComponents& v);

/// Generalized least squares beta for fixed variances.
Eigen::VectorXd gls_beta(const MarginalModel& model, const VarianceComponents& v);

/// Max over all coordinates (beta, then log-variances) of
/// |analytic - central difference| / max(1, |analytic|).
double gradient_check(const MarginalModel& model, const Eigen::VectorXd& beta, const VarianceComponents& v,
                      double step = 1e-5);

struct MlOptions {
    std::size_t max_iterations = 500;
    double loglik_tolerance = 1e-8;
    double gradient_tolerance = 1e-5;
    double boundary_log_variance = -30.0;
};

struct MlFit {
    Eigen::VectorXd beta;
    VarianceComponents variances;
    double log_likelihood = 0.0;
    std::size_t iterations = 0;
    /// Per variance (classifications first, residual last): pinned at the
    /// lower boundary of the log-variance scale.
    std::vector<bool> at_boundary;
    std::vector<double> trace; // log-likelihood after each iteration
};

/// Fisher scoring on log-variances with beta profiled out by GLS. Throws
/// Errc::convergence (with the recent trace) after max_iterations.
MlFit fit_ml(const MarginalModel& model, const MlOptions& options = {});

} // namespace mmfit
