#include "mmfit/core.hpp"

#include "mmfit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace mmfit {

// -------------------------------------------------------------------------
// Dataset
// -------------------------------------------------------------------------

Dataset::Dataset(std::vector<std::string> unit_ids, std::map<std::string, std::vector<double>> columns)
    : unit_ids_(std::move(unit_ids)), columns_(std::move(columns)) {
    for (const auto& [name, values] : columns_) {
        if (values.size() != unit_ids_.size()) {
            throw Error(Errc::dimension, fmt::format("column '{}' has {} entries, expected {}", name,
                                                     values.size(), unit_ids_.size()));
        }
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : unit_ids_) {
        if (!seen.insert(id).second) {
            throw Error(Errc::ingest, fmt::format("duplicate unit id '{}'", id));
        }
    }
}

std::span<const double> Dataset::column(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) {
        throw Error(Errc::dimension, fmt::format("dataset has no column '{}'", name));
    }
    return it->second;
}

Dataset Dataset::with_column(const std::string& name, std::vector<double> values) const {
    auto columns = columns_;
    columns[name] = std::move(values);
    return Dataset(unit_ids_, std::move(columns));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    std::vector<std::string> ids;
    ids.reserve(rows.size());
    for (auto r : rows) ids.push_back(unit_ids_.at(r));
    std::map<std::string, std::vector<double>> columns;
    for (const auto& [name, values] : columns_) {
        auto& out = columns[name];
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(values[r]);
    }
    return Dataset(std::move(ids), std::move(columns));
}

// -------------------------------------------------------------------------
// Classification
// -------------------------------------------------------------------------

Classification::Classification(std::string name, std::vector<std::string> cluster_labels)
    : name_(std::move(name)), labels_(std::move(cluster_labels)) {
    if (labels_.empty()) {
        throw Error(Errc::dimension, fmt::format("classification '{}' has no clusters", name_));
    }
    for (std::size_t j = 0; j < labels_.size(); ++j) {
        if (!index_.emplace(labels_[j], j).second) {
            throw Error(Errc::ingest,
                        fmt::format("classification '{}' repeats cluster label '{}'", name_, labels_[j]));
        }
    }
}

std::optional<std::size_t> Classification::index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// -------------------------------------------------------------------------
// Validation
// -------------------------------------------------------------------------

std::string ValidationReport::to_string() const {
    if (ok()) return "pass\n";
    std::string out;
    for (const auto& v : violations) {
        out += fmt::format("unit {}: {}\n", v.unit, v.message);
    }
    return out;
}

ValidationReport validate_design(const Classification& classification, const MembershipRows& rows,
                                 std::size_t n_units) {
    using Kind = Violation::Kind;
    ValidationReport report;
    const std::size_t J = classification.size();
    if (rows.size() != n_units) {
        report.violations.push_back({Kind::unit_count, rows.size(),
                                     fmt::format("design has {} rows but the data has {} units",
                                                 rows.size(), n_units)});
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.empty()) {
            report.violations.push_back({Kind::empty_row, i, "no memberships"});
            continue;
        }
        double sum = 0.0;
        std::unordered_set<std::size_t> seen;
        for (const auto& e : row) {
            if (e.cluster >= J) {
                report.violations.push_back(
                    {Kind::out_of_range, i, fmt::format("cluster index {} out of range [0, {})", e.cluster, J)});
            }
            if (!seen.insert(e.cluster).second) {
                report.violations.push_back(
                    {Kind::duplicate_cluster, i, fmt::format("cluster index {} listed twice", e.cluster)});
            }
            if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
                report.violations.push_back(
                    {Kind::non_positive_weight, i, fmt::format("weight {} is not positive", e.weight)});
            }
            sum += e.weight;
        }
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
            report.violations.push_back({Kind::row_sum, i, fmt::format("weights sum to {} (not 1)", sum)});
        }
    }
    return report;
}

ValidationReport validate_design(const MembershipDesign& design, std::size_t n_units) {
    return validate_design(design.classification(), design.rows(), n_units);
}

// -------------------------------------------------------------------------
// MembershipDesign
// -------------------------------------------------------------------------

MembershipDesign::MembershipDesign(std::shared_ptr<const Classification> classification,
                                   const MembershipRows& rows)
    : classification_(std::move(classification)) {
    if (!classification_) throw Error(Errc::dimension, "membership design needs a classification");

    MembershipRows cleaned;
    cleaned.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<MembershipEntry> row;
        for (const auto& e : rows[i]) {
            if (e.weight < 0.0 || !std::isfinite(e.weight)) {
                throw Error(Errc::invalid_weights,
                            fmt::format("classification '{}', unit {}: weight {} is negative or non-finite",
                                        name(), i, e.weight));
            }
            if (e.weight != 0.0) row.push_back(e);
        }
        std::stable_sort(row.begin(), row.end(),
                         [](const MembershipEntry& a, const MembershipEntry& b) { return a.cluster < b.cluster; });
        double sum = 0.0;
        for (const auto& e : row) sum += e.weight;
        // Rows already stochastic to ~machine precision are kept bit-for-bit
        // so that construction is idempotent.
        const double gap = std::abs(sum - 1.0);
        if (!row.empty() && gap > 1e-12 && gap <= kRenormalizeTolerance) {
            for (auto& e : row) e.weight /= sum;
        }
        cleaned.push_back(std::move(row));
    }

    auto report = validate_design(*classification_, cleaned, cleaned.size());
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw Error(Errc::invalid_weights,
                    fmt::format("classification '{}': {} violation(s); first at unit {}: {}", name(),
                                report.violations.size(), v.unit, v.message));
    }

    offsets_.reserve(cleaned.size() + 1);
    offsets_.push_back(0);
    for (const auto& row : cleaned) {
        entries_.insert(entries_.end(), row.begin(), row.end());
        offsets_.push_back(entries_.size());
    }
}

MembershipRows MembershipDesign::rows() const {
    MembershipRows out(n_units());
    for (std::size_t i = 0; i < n_units(); ++i) {
        auto r = row(i);
        out[i].assign(r.begin(), r.end());
    }
    return out;
}

Eigen::MatrixXd MembershipDesign::dense() const {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_units()),
                                              static_cast<Eigen::Index>(n_clusters()));
    for (std::size_t i = 0; i < n_units(); ++i) {
        for (const auto& e : row(i)) {
            W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.cluster)) = e.weight;
        }
    }
    return W;
}

bool MembershipDesign::operator==(const MembershipDesign& other) const {
    return *classification_ == *other.classification_ && offsets_ == other.offsets_ &&
           entries_ == other.entries_;
}

// -------------------------------------------------------------------------
// Structural operations
// -------------------------------------------------------------------------

std::vector<double> normalize_weights(std::span<const double> raw) {
    if (raw.empty()) throw Error(Errc::invalid_weights, "no weights given");
    double sum = 0.0;
    for (double w : raw) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw Error(Errc::invalid_weights, fmt::format("weight {} is negative or non-finite", w));
        }
        sum += w;
    }
    if (!(sum > 0.0)) throw Error(Errc::invalid_weights, "weights are all zero");
    std::vector<double> out(raw.begin(), raw.end());
    for (double& w : out) w /= sum;
    return out;
}

std::vector<double> weighted_cluster_covariate(const MembershipDesign& design,
                                               std::span<const double> cluster_values) {
    if (cluster_values.size() != design.n_clusters()) {
        throw Error(Errc::dimension, fmt::format("got {} cluster values for {} clusters of '{}'",
                                                 cluster_values.size(), design.n_clusters(), design.name()));
    }
    std::vector<double> out(design.n_units(), 0.0);
    for (std::size_t i = 0; i < design.n_units(); ++i) {
        for (const auto& e : design.row(i)) out[i] += e.weight * cluster_values[e.cluster];
    }
    return out;
}

MembershipDesign collapse_to_single_membership(const MembershipDesign& design) {
    MembershipRows rows(design.n_units());
    for (std::size_t i = 0; i < design.n_units(); ++i) {
        const MembershipEntry* best = nullptr;
        for (const auto& e : design.row(i)) {
            if (!best || e.weight > best->weight || (e.weight == best->weight && e.cluster < best->cluster)) {
                best = &e;
            }
        }
        rows[i] = {MembershipEntry{best->cluster, 1.0}};
    }
    return MembershipDesign(design.classification_ptr(), rows);
}

Eigen::VectorXd random_contribution(const MembershipDesign& design, const Eigen::VectorXd& u) {
    if (static_cast<std::size_t>(u.size()) != design.n_clusters()) {
        throw Error(Errc::dimension, fmt::format("u for '{}' has length {}, expected {}", design.name(),
                                                 u.size(), design.n_clusters()));
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.n_units()));
    for (std::size_t i = 0; i < design.n_units(); ++i) {
        double s = 0.0;
        for (const auto& e : design.row(i)) s += e.weight * u[static_cast<Eigen::Index>(e.cluster)];
        out[static_cast<Eigen::Index>(i)] = s;
    }
    return out;
}

// -------------------------------------------------------------------------
// ModelSpec
// -------------------------------------------------------------------------

ModelSpec::ModelSpec(std::string response, std::vector<std::string> fixed_covariates,
                     std::vector<MembershipDesign> classifications)
    : response_(std::move(response)), covariates_(std::move(fixed_covariates)),
      classifications_(std::move(classifications)) {
    if (classifications_.empty()) {
        throw Error(Errc::invalid_config, "a model needs at least one random classification");
    }
    std::unordered_set<std::string> names;
    for (const auto& d : classifications_) {
        if (!names.insert(d.name()).second) {
            throw Error(Errc::invalid_config, fmt::format("classification '{}' appears twice", d.name()));
        }
    }
    const auto n = classifications_.front().n_units();
    for (const auto& d : classifications_) {
        if (d.n_units() != n) {
            throw Error(Errc::dimension, "membership designs cover different numbers of units");
        }
    }
}

void ModelSpec::check_against(const Dataset& data) const {
    auto check_column = [&](const std::string& name) {
        for (double v : data.column(name)) {
            if (!std::isfinite(v)) {
                throw Error(Errc::ingest, fmt::format("column '{}' contains non-finite values", name));
            }
        }
    };
    check_column(response_);
    for (const auto& c : covariates_) check_column(c);
    for (const auto& d : classifications_) {
        if (d.n_units() != data.n_units()) {
            throw Error(Errc::dimension, fmt::format("design '{}' has {} units but the data has {}", d.name(),
                                                     d.n_units(), data.n_units()));
        }
    }
}

Eigen::MatrixXd ModelSpec::design_matrix(const Dataset& data) const {
    const auto n = static_cast<Eigen::Index>(data.n_units());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(n_beta()));
    X.col(0).setOnes();
    for (std::size_t k = 0; k < covariates_.size(); ++k) {
        auto col = data.column(covariates_[k]);
        X.col(static_cast<Eigen::Index>(k + 1)) = Eigen::Map<const Eigen::VectorXd>(col.data(), n);
    }
    return X;
}

Eigen::VectorXd ModelSpec::response_vector(const Dataset& data) const {
    auto col = data.column(response_);
    return Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
}

ModelSpec ModelSpec::with_classifications(std::vector<MembershipDesign> classifications) const {
    return ModelSpec(response_, covariates_, std::move(classifications));
}

// -------------------------------------------------------------------------
// Parameters
// -------------------------------------------------------------------------

void check_parameters(const ModelSpec& spec, const Parameters& params, bool allow_zero_variance) {
    const auto& cls = spec.classifications();
    if (static_cast<std::size_t>(params.beta.size()) != spec.n_beta()) {
        throw Error(Errc::dimension,
                    fmt::format("beta has length {}, model needs {}", params.beta.size(), spec.n_beta()));
    }
    if (params.sigma2_u.size() != cls.size() || params.u.size() != cls.size()) {
        throw Error(Errc::dimension, "one variance and one effect vector per classification required");
    }
    auto bad_variance = [&](double v) { return allow_zero_variance ? !(v >= 0.0) : !(v > 0.0); };
    if (bad_variance(params.sigma2_e)) {
        throw Error(Errc::invalid_config, fmt::format("sigma2_e = {} is not a valid variance", params.sigma2_e));
    }
    for (std::size_t c = 0; c < cls.size(); ++c) {
        if (bad_variance(params.sigma2_u[c])) {
            throw Error(Errc::invalid_config, fmt::format("sigma2_u for '{}' = {} is not a valid variance",
                                                          cls[c].name(), params.sigma2_u[c]));
        }
        if (static_cast<std::size_t>(params.u[c].size()) != cls[c].n_clusters()) {
            throw Error(Errc::dimension, fmt::format("u for '{}' has length {}, expected {}", cls[c].name(),
                                                     params.u[c].size(), cls[c].n_clusters()));
        }
    }
}

Eigen::VectorXd linear_predictor(const ModelSpec& spec, const Dataset& data, const Parameters& params) {
    check_parameters(spec, params, true);
    spec.check_against(data);
    Eigen::VectorXd eta = spec.design_matrix(data) * params.beta;
    const auto& cls = spec.classifications();
    for (std::size_t c = 0; c < cls.size(); ++c) eta += random_contribution(cls[c], params.u[c]);
    return eta;
}

} // namespace mmfit
