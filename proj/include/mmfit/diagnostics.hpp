#pragma once

// Posterior summaries and chain diagnostics.

#include <span>
#include <vector>

namespace mmfit {

struct EssEstimate {
    double ess = 0.0;
    bool constant = false; // chain had zero variance; ess reported as its length
};

/// Geyer initial-positive-sequence estimate, clamped to (0, length].
/// Requires at least 10 draws.
EssEstimate effective_sample_size(std::span<const double> draws);

/// Sample autocorrelations rho_0..rho_{max_lag} (FFT based, biased estimator).
std::vector<double> autocorrelation(std::span<const double> draws, std::size_t max_lag);

/// Split-chain potential scale reduction. NaN when fewer than two chains or
/// fewer than four draws per chain.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double prob);

struct DrawSummary {
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double q50 = 0.0;
    double q975 = 0.0;
    double ess = 0.0;
    double rhat = 0.0;
    bool constant = false;
    /// Monte Carlo standard error of the mean, sd / sqrt(ess).
    double mcse() const;
};

/// Summary of one scalar over several chains (ess summed over chains).
DrawSummary summarize(const std::vector<std::vector<double>>& chains);

} // namespace mmfit
