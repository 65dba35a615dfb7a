#pragma once

// CSV ingestion and output.
//
// Data CSV: header row, comma separated, a unit_id column plus numeric
// columns. "", NA, NaN and "." are read as missing.
// Membership CSV (long format): unit_id,classification,cluster_id,weight.

#include "mmfit/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmfit {

struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based line of each row

    /// Position of a header column; throws Errc::ingest naming the file.
    std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

bool is_missing_token(std::string_view token);
/// Strict parse of a whole token; nullopt on failure.
std::optional<double> parse_double(std::string_view token);

/// Shortest representation that reads back to the same double.
std::string format_double(double value);

struct IngestOptions {
    std::string response;
    std::vector<std::string> covariates;
    /// Rescale membership rows whose weights do not sum to 1 (e.g. raw counts).
    bool normalize = false;
};

struct IngestResult {
    Dataset data;
    std::vector<MembershipDesign> designs;
    std::size_t dropped_units = 0;
    std::vector<std::string> warnings;
};

/// Reads the data file and one or more membership files. Units with missing
/// response or covariate values are dropped (complete case). Cluster labels
/// are ordered lexicographically within each classification.
IngestResult ingest(const std::filesystem::path& data_csv, const std::vector<std::filesystem::path>& membership_csvs,
                    const IngestOptions& options);

void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_memberships_csv(std::ostream& out, const MembershipDesign& design, const std::vector<std::string>& unit_ids);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
void write_memberships_csv(const std::filesystem::path& path, const MembershipDesign& design,
                           const std::vector<std::string>& unit_ids);

} // namespace mmfit
