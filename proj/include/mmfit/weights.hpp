#pragma once

// Builders that turn raw domain quantities into membership designs.

#include "mmfit/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace mmfit {

struct Exposure {
    std::size_t cluster = 0;
    double amount = 0.0; // lessons, hours, days, ...
};

/// Weights proportional to time (or any other exposure) spent with each cluster.
MembershipDesign weights_from_exposure(std::shared_ptr<const Classification> classification,
                                       const std::vector<std::vector<Exposure>>& exposures);

struct AdjacencyEdge {
    std::string area_a;
    std::string area_b;
    double magnitude = 0.0; // shared border length or neighbour population
};

/// Undirected weighted adjacency between areas.
class AdjacencyList {
public:
    AdjacencyList(std::shared_ptr<const Classification> areas, std::vector<AdjacencyEdge> edges);

    const Classification& areas() const noexcept { return *areas_; }
    const std::vector<AdjacencyEdge>& edges() const noexcept { return edges_; }

    /// (neighbour index, magnitude) pairs sorted by neighbour index.
    const std::vector<std::pair<std::size_t, double>>& neighbours(std::size_t area) const {
        return neighbours_.at(area);
    }

private:
    std::shared_ptr<const Classification> areas_;
    std::vector<AdjacencyEdge> edges_;
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbours_;
};

/// Each unit is a member of the areas bordering its residence area, weighted
/// in proportion to the edge magnitude. The residence area itself is left out;
/// it belongs in a separate single-membership classification.
MembershipDesign weights_from_adjacency(const AdjacencyList& adjacency, const std::vector<std::string>& residence,
                                        const std::string& classification_name = "neighbours");

enum class DistanceDecay { inverse, inverse_square };

struct Candidate {
    std::size_t cluster = 0;
    double distance = 0.0;
};

/// Attendance probabilities from distances to candidate clusters.
MembershipDesign weights_from_probabilities(std::shared_ptr<const Classification> classification,
                                            const std::vector<std::vector<Candidate>>& candidates,
                                            DistanceDecay decay);

enum class WeightScheme { keep, equal };

MembershipDesign reweight_scheme(const MembershipDesign& design, WeightScheme scheme);

} // namespace mmfit
