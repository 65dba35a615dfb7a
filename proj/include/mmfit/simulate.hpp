#pragma once

// Synthetic multiple membership data for recovery and misspecification
// experiments.

#include "mmfit/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mmfit {

struct Cardinality {
    enum class Kind { fixed, uniform };
    Kind kind = Kind::fixed;
    std::size_t m = 1; // fixed m, or the upper end of uniform {1..m}

    static Cardinality fixed(std::size_t m) { return {Kind::fixed, m}; }
    static Cardinality uniform(std::size_t m_max) { return {Kind::uniform, m_max}; }
};

enum class SimWeights { equal, random_proportions };

struct ClassificationSim {
    std::string name = "cluster";
    std::size_t n_clusters = 10;
    Cardinality cardinality;
    SimWeights weights = SimWeights::equal;
    double sigma2_u = 0.25; // may be 0 in simulation
};

struct SimConfig {
    std::size_t n_units = 100;
    std::vector<ClassificationSim> classifications{ClassificationSim{}};
    /// Intercept first; one standard-normal covariate per further entry.
    std::vector<double> beta{0.0, 0.5};
    double sigma2_e = 1.0;
    std::uint64_t seed = 1;
};

/// Throws Errc::invalid_config / Errc::infeasible_cardinality.
void validate_config(const SimConfig& cfg);

/// Config of replicate r: same settings, independent seed stream.
SimConfig replicate_config(const SimConfig& cfg, std::uint64_t replicate);

/// Covariate column names used by the simulator ("x", or "x1".."xk").
std::vector<std::string> simulated_covariate_names(std::size_t n_covariates);

MembershipDesign simulate_design(const SimConfig& cfg, std::size_t classification);

struct SimulatedData {
    Dataset data;
    ModelSpec spec;
    Parameters truth; // includes the realized cluster effects
};

/// Draws u ~ N(0, sigma2_u), x ~ N(0, 1), e ~ N(0, sigma2_e) and sets
/// y = x'beta + sum_c W_c u_c + e over the given designs.
SimulatedData simulate_response(const std::vector<MembershipDesign>& designs, const SimConfig& cfg);

/// simulate_design for every classification followed by simulate_response.
SimulatedData simulate(const SimConfig& cfg);

} // namespace mmfit
