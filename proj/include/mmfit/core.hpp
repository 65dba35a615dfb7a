#pragma once

// Domain types for multiple membership multilevel models: unit-level data,
// classifications of higher-level clusters, sparse membership designs and
// model specifications.

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmfit {

/// Column-oriented table of unit-level values keyed by column name.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> unit_ids, std::map<std::string, std::vector<double>> columns);

    std::size_t n_units() const noexcept { return unit_ids_.size(); }
    const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
    const std::map<std::string, std::vector<double>>& columns() const noexcept { return columns_; }

    bool has_column(const std::string& name) const { return columns_.count(name) != 0; }
    /// Throws Errc::dimension when the column does not exist.
    std::span<const double> column(const std::string& name) const;

    Dataset with_column(const std::string& name, std::vector<double> values) const;
    Dataset subset(std::span<const std::size_t> rows) const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<std::string> unit_ids_;
    std::map<std::string, std::vector<double>> columns_;
};

/// A named set of clusters (teachers, schools, neighbourhoods, ...).
class Classification {
public:
    Classification(std::string name, std::vector<std::string> cluster_labels);

    const std::string& name() const noexcept { return name_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    std::optional<std::size_t> index_of(const std::string& label) const;

    bool operator==(const Classification& other) const {
        return name_ == other.name_ && labels_ == other.labels_;
    }

private:
    std::string name_;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct MembershipEntry {
    std::size_t cluster = 0;
    double weight = 0.0;

    bool operator==(const MembershipEntry&) const = default;
};

/// Unvalidated per-unit membership lists, as read from files or built by hand.
using MembershipRows = std::vector<std::vector<MembershipEntry>>;

inline constexpr double kRowSumTolerance = 1e-8;
inline constexpr double kRenormalizeTolerance = 1e-6;

struct Violation {
    enum class Kind { empty_row, row_sum, duplicate_cluster, out_of_range, non_positive_weight, unit_count };
    Kind kind;
    std::size_t unit;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::string to_string() const;
};

/// Checks raw rows against the membership invariants without throwing.
ValidationReport validate_design(const Classification& classification, const MembershipRows& rows,
                                 std::size_t n_units);

/// Row-stochastic sparse map from units to the clusters of one classification.
///
/// Construction drops zero-weight entries and rescales rows whose sums are
/// within kRenormalizeTolerance of 1. Anything else that breaks the
/// invariants (empty rows, negative weights, duplicates, bad indices, sums
/// further from 1) raises Errc::invalid_weights.
class MembershipDesign {
public:
    MembershipDesign(std::shared_ptr<const Classification> classification, const MembershipRows& rows);

    const Classification& classification() const noexcept { return *classification_; }
    const std::shared_ptr<const Classification>& classification_ptr() const noexcept { return classification_; }
    const std::string& name() const noexcept { return classification_->name(); }

    std::size_t n_units() const noexcept { return offsets_.size() - 1; }
    std::size_t n_clusters() const noexcept { return classification_->size(); }
    std::size_t n_entries() const noexcept { return entries_.size(); }

    std::span<const MembershipEntry> row(std::size_t unit) const {
        return {entries_.data() + offsets_[unit], entries_.data() + offsets_[unit + 1]};
    }
    MembershipRows rows() const;

    /// Dense n_units x n_clusters weight matrix.
    Eigen::MatrixXd dense() const;

    bool operator==(const MembershipDesign& other) const;

private:
    std::shared_ptr<const Classification> classification_;
    std::vector<std::size_t> offsets_;
    std::vector<MembershipEntry> entries_;
};

ValidationReport validate_design(const MembershipDesign& design, std::size_t n_units);

/// Scales non-negative raw weights to sum to one. Throws Errc::invalid_weights
/// for empty, negative, non-finite or all-zero input.
std::vector<double> normalize_weights(std::span<const double> raw);

/// output_i = sum_j w_ji * cluster_values[j]
std::vector<double> weighted_cluster_covariate(const MembershipDesign& design,
                                               std::span<const double> cluster_values);

/// Keeps only the largest-weight cluster per unit (lowest index wins ties).
MembershipDesign collapse_to_single_membership(const MembershipDesign& design);

/// sum_j w_ji u_j for every unit.
Eigen::VectorXd random_contribution(const MembershipDesign& design, const Eigen::VectorXd& u);

class ModelSpec {
public:
    ModelSpec(std::string response, std::vector<std::string> fixed_covariates,
              std::vector<MembershipDesign> classifications);

    const std::string& response() const noexcept { return response_; }
    const std::vector<std::string>& fixed_covariates() const noexcept { return covariates_; }
    const std::vector<MembershipDesign>& classifications() const noexcept { return classifications_; }

    /// Intercept plus one coefficient per covariate.
    std::size_t n_beta() const noexcept { return covariates_.size() + 1; }

    /// Verifies that the columns exist, are finite, and that every design
    /// covers exactly the dataset's units.
    void check_against(const Dataset& data) const;

    /// n x n_beta matrix with the intercept column first.
    Eigen::MatrixXd design_matrix(const Dataset& data) const;
    Eigen::VectorXd response_vector(const Dataset& data) const;

    ModelSpec with_classifications(std::vector<MembershipDesign> classifications) const;

private:
    std::string response_;
    std::vector<std::string> covariates_;
    std::vector<MembershipDesign> classifications_;
};

struct Parameters {
    Eigen::VectorXd beta;
    double sigma2_e = 1.0;
    std::vector<double> sigma2_u;
    std::vector<Eigen::VectorXd> u;
};

/// Dimension and positivity checks. Zero variances are accepted only when
/// allow_zero_variance is set (simulation configs).
void check_parameters(const ModelSpec& spec, const Parameters& params, bool allow_zero_variance = false);

/// eta_i = x_i' beta + sum_c sum_j w^(c)_ji u^(c)_j
Eigen::VectorXd linear_predictor(const ModelSpec& spec, const Dataset& data, const Parameters& params);

} // namespace mmfit
