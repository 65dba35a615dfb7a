#include "mmfit/weights.hpp"

#include "mmfit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace mmfit {

namespace {

// Normalizes one unit's raw scores, naming the unit on failure.
std::vector<MembershipEntry> normalized_row(std::size_t unit, const std::vector<std::size_t>& clusters,
                                            const std::vector<double>& scores) {
    std::vector<double> weights;
    try {
        weights = normalize_weights(scores);
    } catch (const Error& e) {
        throw Error(e.code(), fmt::format("unit {}: {}", unit, e.what()));
    }
    std::vector<MembershipEntry> row;
    row.reserve(clusters.size());
    for (std::size_t k = 0; k < clusters.size(); ++k) row.push_back({clusters[k], weights[k]});
    return row;
}

} // namespace

MembershipDesign weights_from_exposure(std::shared_ptr<const Classification> classification,
                                       const std::vector<std::vector<Exposure>>& exposures) {
    MembershipRows rows;
    rows.reserve(exposures.size());
    for (std::size_t i = 0; i < exposures.size(); ++i) {
        std::vector<std::size_t> clusters;
        std::vector<double> amounts;
        for (const auto& e : exposures[i]) {
            clusters.push_back(e.cluster);
            amounts.push_back(e.amount);
        }
        rows.push_back(normalized_row(i, clusters, amounts));
    }
    return MembershipDesign(std::move(classification), rows);
}

AdjacencyList::AdjacencyList(std::shared_ptr<const Classification> areas, std::vector<AdjacencyEdge> edges)
    : areas_(std::move(areas)), edges_(std::move(edges)), neighbours_(areas_->size()) {
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& edge : edges_) {
        auto a = areas_->index_of(edge.area_a);
        auto b = areas_->index_of(edge.area_b);
        if (!a || !b) {
            throw Error(Errc::ingest,
                        fmt::format("edge {}-{} references an unknown area", edge.area_a, edge.area_b));
        }
        if (*a == *b) throw Error(Errc::ingest, fmt::format("self edge on area {}", edge.area_a));
        if (!(edge.magnitude > 0.0) || !std::isfinite(edge.magnitude)) {
            throw Error(Errc::invalid_weights, fmt::format("edge {}-{} has non-positive magnitude {}",
                                                           edge.area_a, edge.area_b, edge.magnitude));
        }
        if (!pairs.emplace(std::min(*a, *b), std::max(*a, *b)).second) {
            throw Error(Errc::ingest, fmt::format("edge {}-{} listed twice", edge.area_a, edge.area_b));
        }
        neighbours_[*a].emplace_back(*b, edge.magnitude);
        neighbours_[*b].emplace_back(*a, edge.magnitude);
    }
    for (auto& list : neighbours_) std::sort(list.begin(), list.end());
}

MembershipDesign weights_from_adjacency(const AdjacencyList& adjacency, const std::vector<std::string>& residence,
                                        const std::string& classification_name) {
    const auto& areas = adjacency.areas();
    auto neighbours_cls = std::make_shared<const Classification>(classification_name, areas.labels());
    MembershipRows rows;
    rows.reserve(residence.size());
    for (std::size_t i = 0; i < residence.size(); ++i) {
        auto home = areas.index_of(residence[i]);
        if (!home) {
            throw Error(Errc::ingest, fmt::format("unit {}: unknown residence area '{}'", i, residence[i]));
        }
        const auto& nbrs = adjacency.neighbours(*home);
        if (nbrs.empty()) {
            throw Error(Errc::isolated_area, fmt::format("area '{}' has no neighbours", residence[i]));
        }
        std::vector<std::size_t> clusters;
        std::vector<double> magnitudes;
        for (const auto& [j, m] : nbrs) {
            clusters.push_back(j);
            magnitudes.push_back(m);
        }
        rows.push_back(normalized_row(i, clusters, magnitudes));
    }
    return MembershipDesign(std::move(neighbours_cls), rows);
}

MembershipDesign weights_from_probabilities(std::shared_ptr<const Classification> classification,
                                            const std::vector<std::vector<Candidate>>& candidates,
                                            DistanceDecay decay) {
    MembershipRows rows;
    rows.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::vector<std::size_t> clusters;
        std::vector<double> scores;
        double farthest = 0.0;
        for (const auto& c : candidates[i]) {
            if (!(c.distance > 0.0) || !std::isfinite(c.distance)) {
                throw Error(Errc::invalid_distance,
                            fmt::format("unit {}: distance {} to cluster {} is not positive", i, c.distance,
                                        c.cluster));
            }
            farthest = std::max(farthest, c.distance);
        }
        // Scores are taken relative to the farthest candidate so that simple
        // distance ratios give exact weights (1 and 3 -> 9:1, not 1:0.111...).
        for (const auto& c : candidates[i]) {
            const double ratio = farthest / c.distance;
            clusters.push_back(c.cluster);
            scores.push_back(decay == DistanceDecay::inverse ? ratio : ratio * ratio);
        }
        rows.push_back(normalized_row(i, clusters, scores));
    }
    return MembershipDesign(std::move(classification), rows);
}

MembershipDesign reweight_scheme(const MembershipDesign& design, WeightScheme scheme) {
    if (scheme == WeightScheme::keep) return design;
    MembershipRows rows = design.rows();
    for (auto& row : rows) {
        const double w = 1.0 / static_cast<double>(row.size());
        for (auto& e : row) e.weight = w;
    }
    return MembershipDesign(design.classification_ptr(), rows);
}

} // namespace mmfit
