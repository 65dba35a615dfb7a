#include "mmfit/simulate.hpp"

#include "mmfit/error.hpp"
#include "mmfit/random.hpp"

#include <fmt/format.h>

#include <cmath>

namespace mmfit {

namespace {

// Stream ids; classification c uses kDesignStream + c.
constexpr std::uint64_t kDesignStream = 100;
constexpr std::uint64_t kResponseStream = 1;

std::string padded(const std::string& prefix, std::size_t k, std::size_t count) {
    const auto width = fmt::format("{}", count).size();
    return fmt::format("{}{:0{}}", prefix, k, width);
}

} // namespace

void validate_config(const SimConfig& cfg) {
    if (cfg.n_units < 1) throw Error(Errc::invalid_config, "n_units must be at least 1");
    if (cfg.classifications.empty()) throw Error(Errc::invalid_config, "at least one classification required");
    if (cfg.beta.empty()) throw Error(Errc::invalid_config, "beta must contain the intercept");
    if (!(cfg.sigma2_e >= 0.0)) throw Error(Errc::invalid_config, "sigma2_e must be non-negative");
    for (const auto& c : cfg.classifications) {
        if (c.n_clusters < 1) throw Error(Errc::invalid_config, fmt::format("'{}' needs J >= 1", c.name));
        if (!(c.sigma2_u >= 0.0)) {
            throw Error(Errc::invalid_config, fmt::format("sigma2_u for '{}' must be non-negative", c.name));
        }
        if (c.cardinality.m < 1) {
            throw Error(Errc::invalid_config, fmt::format("'{}' needs membership cardinality >= 1", c.name));
        }
        if (c.cardinality.m > c.n_clusters) {
            throw Error(Errc::infeasible_cardinality,
                        fmt::format("'{}': cardinality {} exceeds J = {}", c.name, c.cardinality.m, c.n_clusters));
        }
    }
}

SimConfig replicate_config(const SimConfig& cfg, std::uint64_t replicate) {
    SimConfig out = cfg;
    out.seed = derive_seed(cfg.seed, 0x5eedULL, replicate);
    return out;
}

std::vector<std::string> simulated_covariate_names(std::size_t n_covariates) {
    if (n_covariates == 1) return {"x"};
    std::vector<std::string> names;
    for (std::size_t k = 1; k <= n_covariates; ++k) names.push_back(fmt::format("x{}", k));
    return names;
}

MembershipDesign simulate_design(const SimConfig& cfg, std::size_t classification) {
    validate_config(cfg);
    const auto& c = cfg.classifications.at(classification);
    std::vector<std::string> labels;
    labels.reserve(c.n_clusters);
    for (std::size_t j = 1; j <= c.n_clusters; ++j) labels.push_back(padded("c", j, c.n_clusters));
    auto cls = std::make_shared<const Classification>(c.name, std::move(labels));

    RandomStream rng(cfg.seed, kDesignStream + classification);
    MembershipRows rows(cfg.n_units);
    for (auto& row : rows) {
        const std::size_t m = c.cardinality.kind == Cardinality::Kind::fixed ? c.cardinality.m
                                                                              : 1 + rng.index(c.cardinality.m);
        const auto clusters = rng.sample_without_replacement(c.n_clusters, m);
        std::vector<double> scores(m, 1.0);
        if (c.weights == SimWeights::random_proportions) {
            for (auto& s : scores) s = rng.uniform();
        }
        const auto weights = normalize_weights(scores);
        for (std::size_t k = 0; k < m; ++k) row.push_back({clusters[k], weights[k]});
    }
    return MembershipDesign(std::move(cls), rows);
}

SimulatedData simulate_response(const std::vector<MembershipDesign>& designs, const SimConfig& cfg) {
    validate_config(cfg);
    if (designs.size() != cfg.classifications.size()) {
        throw Error(Errc::dimension, "one design per configured classification required");
    }
    const std::size_t n = cfg.n_units;
    for (const auto& d : designs) {
        if (d.n_units() != n) throw Error(Errc::dimension, fmt::format("design '{}' size mismatch", d.name()));
    }

    RandomStream rng(cfg.seed, kResponseStream);
    Parameters truth;
    truth.beta = Eigen::Map<const Eigen::VectorXd>(cfg.beta.data(), static_cast<Eigen::Index>(cfg.beta.size()));
    truth.sigma2_e = cfg.sigma2_e;
    for (std::size_t c = 0; c < designs.size(); ++c) {
        const double sd = std::sqrt(cfg.classifications[c].sigma2_u);
        Eigen::VectorXd u(static_cast<Eigen::Index>(designs[c].n_clusters()));
        for (auto& v : u) v = rng.normal(0.0, sd);
        truth.sigma2_u.push_back(cfg.classifications[c].sigma2_u);
        truth.u.push_back(std::move(u));
    }

    const auto covariate_names = simulated_covariate_names(cfg.beta.size() - 1);
    std::vector<std::vector<double>> covariates(covariate_names.size(), std::vector<double>(n));
    std::vector<double> y(n);
    std::vector<std::string> ids;
    ids.reserve(n);
    const double sd_e = std::sqrt(cfg.sigma2_e);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(padded("u", i + 1, n));
        double eta = cfg.beta[0];
        for (std::size_t k = 0; k < covariates.size(); ++k) {
            covariates[k][i] = rng.normal();
            eta += cfg.beta[k + 1] * covariates[k][i];
        }
        for (std::size_t c = 0; c < designs.size(); ++c) {
            for (const auto& e : designs[c].row(i)) eta += e.weight * truth.u[c][static_cast<Eigen::Index>(e.cluster)];
        }
        y[i] = eta + rng.normal(0.0, sd_e);
    }

    std::map<std::string, std::vector<double>> columns;
    columns["y"] = std::move(y);
    for (std::size_t k = 0; k < covariates.size(); ++k) columns[covariate_names[k]] = std::move(covariates[k]);

    return SimulatedData{Dataset(std::move(ids), std::move(columns)), ModelSpec("y", covariate_names, designs),
                         std::move(truth)};
}

SimulatedData simulate(const SimConfig& cfg) {
    validate_config(cfg);
    std::vector<MembershipDesign> designs;
    for (std::size_t c = 0; c < cfg.classifications.size(); ++c) designs.push_back(simulate_design(cfg, c));
    return simulate_response(designs, cfg);
}

} // namespace mmfit
