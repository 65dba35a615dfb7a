#include "mmfit/diagnostics.hpp"

#include "mmfit/error.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

namespace mmfit {

namespace {

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
    const double m = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace

std::vector<double> autocorrelation(std::span<const double> draws, std::size_t max_lag) {
    const std::size_t n = draws.size();
    max_lag = std::min(max_lag, n - 1);
    std::size_t padded = 1;
    while (padded < 2 * n) padded <<= 1;

    const double m = mean_of(draws);
    std::vector<double> centered(padded, 0.0);
    for (std::size_t i = 0; i < n; ++i) centered[i] = draws[i] - m;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, centered);
    for (auto& f : freq) f = std::complex<double>(std::norm(f), 0.0);
    std::vector<double> acov;
    fft.inv(acov, freq);

    std::vector<double> rho(max_lag + 1, 0.0);
    if (!(acov[0] > 0.0)) return rho;
    for (std::size_t t = 0; t <= max_lag; ++t) rho[t] = acov[t] / acov[0];
    return rho;
}

EssEstimate effective_sample_size(std::span<const double> draws) {
    const std::size_t n = draws.size();
    if (n < 10) throw Error(Errc::dimension, "effective sample size needs at least 10 draws");
    const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
    if (*lo == *hi) return {static_cast<double>(n), true};

    const auto rho = autocorrelation(draws, n - 1);
    // tau = -1 + 2 * sum_k (rho_2k + rho_2k+1), truncated at the first
    // non-positive pair sum.
    double tau = -1.0;
    for (std::size_t k = 0; 2 * k + 1 < rho.size(); ++k) {
        const double pair = rho[2 * k] + rho[2 * k + 1];
        if (!(pair > 0.0)) break;
        tau += 2.0 * pair;
    }
    double ess = static_cast<double>(n) / tau;
    if (!(ess > 0.0) || ess > static_cast<double>(n)) ess = static_cast<double>(n);
    return {ess, false};
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (chains.size() < 2) return nan;
    std::size_t len = chains.front().size();
    for (const auto& c : chains) len = std::min(len, c.size());
    const std::size_t half = len / 2;
    if (half < 2) return nan;

    std::vector<double> means;
    std::vector<double> vars;
    for (const auto& c : chains) {
        // Drop the middle draw of odd-length chains.
        std::span<const double> first(c.data(), half);
        std::span<const double> second(c.data() + (len - half), half);
        for (auto part : {first, second}) {
            means.push_back(mean_of(part));
            vars.push_back(variance_of(part));
        }
    }
    const double n = static_cast<double>(half);
    const double W = mean_of(vars);
    const double B = n * variance_of(means);
    if (!(W > 0.0)) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    const double var_plus = (n - 1.0) / n * W + B / n;
    return std::sqrt(var_plus / W);
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double DrawSummary::mcse() const { return ess > 0.0 ? sd / std::sqrt(ess) : std::numeric_limits<double>::quiet_NaN(); }

DrawSummary summarize(const std::vector<std::vector<double>>& chains) {
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    DrawSummary s;
    if (pooled.empty()) return s;
    s.mean = mean_of(pooled);
    s.sd = pooled.size() > 1 ? std::sqrt(variance_of(pooled)) : 0.0;
    s.q025 = quantile(pooled, 0.025);
    s.q50 = quantile(pooled, 0.5);
    s.q975 = quantile(pooled, 0.975);
    s.ess = 0.0;
    for (const auto& c : chains) {
        if (c.size() >= 10) {
            auto e = effective_sample_size(c);
            s.ess += e.ess;
            s.constant = s.constant || e.constant;
        } else {
            s.ess += static_cast<double>(c.size());
        }
    }
    s.rhat = split_rhat(chains);
    return s;
}

} // namespace mmfit
