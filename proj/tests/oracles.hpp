#pragma once
// Reference computations used to check the library. Each one is written
// directly from the model definition and shares no code with the library
// beyond the plain data types.

#include "mmfit/core.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Small model instance held as dense matrices.
struct DenseInstance {
    Eigen::MatrixXd X;
    std::vector<Eigen::MatrixXd> W; // n x J_c per classification
    Eigen::VectorXd y;
};

/// Builds a random instance with n units, the given cluster counts and up to
/// max_m memberships per unit with random weights. Every cluster gets at
/// least one member when n allows it.
DenseInstance random_instance(std::mt19937_64& rng, int n, const std::vector<int>& clusters, int n_covariates,
                              int max_m);

/// Converts a dense instance into library objects (covariates x1.., response y).
struct LibraryInstance {
    mmfit::Dataset data;
    mmfit::ModelSpec spec;
};
LibraryInstance to_library(const DenseInstance& inst);

/// Joint posterior of theta = (beta, u_1, ..., u_C) given the variances under
/// a flat prior on beta: precision Z'Z/s2e + diag(0, 1/s2_c), built densely.
Gaussian joint_location_posterior(const DenseInstance& inst, const std::vector<double>& sigma2_u, double sigma2_e);

/// Conditional of the block `idx` of a Gaussian given the other coordinates at `value`.
Gaussian condition(const Gaussian& joint, const std::vector<int>& idx, const Eigen::VectorXd& value);

/// Mean and covariance of a 2-D density known up to a constant, by
/// trapezoidal quadrature on a grid of +-6 sd around a pilot estimate.
Gaussian quadrature_2d(const std::function<double(double, double)>& log_density, int points_per_axis = 2001);

/// Moments of a positive scalar density known up to a constant, integrated on
/// a log-scale grid. Returns E[x], Var[x], E[1/x], Var[1/x]; the first two
/// are meaningful only where they exist.
struct ScalarMoments {
    double mean;
    double variance;
    double inv_mean;
    double inv_variance;
};
ScalarMoments quadrature_positive(const std::function<double(double)>& log_density, double lo = -40.0,
                                  double hi = 40.0, int points = 400001);

/// Two-level random-intercept marginal log-likelihood from the block
/// compound-symmetry closed form (no factorization).
double two_level_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& cluster,
                                int n_clusters, const Eigen::VectorXd& beta, double sigma2_u, double sigma2_e);

/// log N(y; X beta, V) with u integrated out numerically over a 2-D grid
/// (exactly two clusters, one classification).
double log_marginal_by_quadrature(const DenseInstance& inst, const Eigen::VectorXd& beta, double sigma2_u,
                                  double sigma2_e, int points_per_axis = 2001);

/// Closed-form ML estimates for a balanced one-way layout (intercept only).
struct AnovaMl {
    double mean;
    double sigma2_u;
    double sigma2_e;
};
AnovaMl one_way_anova_ml(const std::vector<std::vector<double>>& groups);

/// Plain random-intercept Gibbs sampler (flat mean prior, inverse-gamma
/// variance priors) for single-membership data, used as a reference.
struct TwoLevelDraws {
    std::vector<std::vector<double>> beta; // per coefficient
    std::vector<double> sigma2_u;
    std::vector<double> sigma2_e;
};
TwoLevelDraws two_level_gibbs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& cluster,
                              int n_clusters, std::uint64_t seed, int burn_in, int iterations, double prior_shape = 0.001,
                              double prior_rate = 0.001);

/// Sample mean and standard deviation.
double mean(const std::vector<double>& v);
double sd(const std::vector<double>& v);
/// Monte Carlo standard error of the mean with a batch-means estimate.
double batch_means_mcse(const std::vector<double>& v, int batches = 50);
/// Type-7 quantile, sorted copy.
double quantile(std::vector<double> v, double p);

double relative_error(double a, double b);

} // namespace oracle
