#include "mmfit/io.hpp"

#include "mmfit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mmfit {

namespace {

std::vector<std::string> split_line(const std::string& line, const std::string& source, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"') {
                if (k + 1 < line.size() && line[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    if (quoted) throw Error(Errc::ingest, fmt::format("{}:{}: unterminated quote", source, line_no));
    fields.push_back(std::move(field));
    return fields;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

std::string at_line(const CsvTable& t, std::size_t row) {
    return fmt::format("{}:{}", t.source, t.line_numbers[row]);
}

} // namespace

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(Errc::ingest, fmt::format("{}: missing column '{}'", source, name));
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto fields = split_line(line, source, line_no);
        for (auto& f : fields) f = trim(std::move(f));
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw Error(Errc::ingest, fmt::format("{}:{}: expected {} fields, found {}", source, line_no,
                                                  t.header.size(), fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (!have_header) throw Error(Errc::ingest, fmt::format("{}: empty file", source));
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::ingest, fmt::format("cannot open '{}'", path.string()));
    return parse_csv(in, path.string());
}

bool is_missing_token(std::string_view token) {
    return token.empty() || token == "NA" || token == "NaN" || token == "nan" || token == ".";
}

std::optional<double> parse_double(std::string_view token) {
    if (token.empty()) return std::nullopt;
    if (token.front() == '+') token.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
    return value;
}

std::string format_double(double value) { return fmt::format("{}", value); }

// -------------------------------------------------------------------------
// Ingestion
// -------------------------------------------------------------------------

IngestResult ingest(const std::filesystem::path& data_csv, const std::vector<std::filesystem::path>& membership_csvs,
                    const IngestOptions& options) {
    IngestResult result;
    const auto table = read_csv(data_csv);
    const auto id_col = table.column("unit_id");

    std::set<std::string> required(options.covariates.begin(), options.covariates.end());
    if (!options.response.empty()) required.insert(options.response);
    for (const auto& name : required) table.column(name);

    // Parse numeric columns; unused columns that are not numeric are skipped.
    std::map<std::string, std::vector<double>> columns;
    for (std::size_t k = 0; k < table.header.size(); ++k) {
        if (k == id_col) continue;
        const auto& name = table.header[k];
        std::vector<double> values;
        values.reserve(table.rows.size());
        bool numeric = true;
        for (std::size_t r = 0; r < table.rows.size() && numeric; ++r) {
            const auto& cell = table.rows[r][k];
            if (is_missing_token(cell)) {
                values.push_back(std::numeric_limits<double>::quiet_NaN());
            } else if (auto v = parse_double(cell)) {
                values.push_back(*v);
            } else if (required.count(name)) {
                throw Error(Errc::ingest,
                            fmt::format("{}: column '{}': cannot parse '{}' as a number", at_line(table, r), name, cell));
            } else {
                numeric = false;
            }
        }
        if (numeric) {
            columns[name] = std::move(values);
        } else {
            result.warnings.push_back(fmt::format("{}: skipping non-numeric column '{}'", table.source, name));
        }
    }

    std::vector<std::string> all_ids;
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& id = table.rows[r][id_col];
        if (id.empty()) throw Error(Errc::ingest, fmt::format("{}: empty unit_id", at_line(table, r)));
        if (!row_of.emplace(id, r).second) {
            throw Error(Errc::ingest, fmt::format("{}: duplicate unit_id '{}'", at_line(table, r), id));
        }
        all_ids.push_back(id);
    }

    // Complete-case filtering on the model columns.
    std::vector<std::size_t> kept;
    std::vector<std::ptrdiff_t> position(table.rows.size(), -1);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        bool complete = true;
        for (const auto& name : required) complete = complete && !std::isnan(columns.at(name)[r]);
        if (complete) {
            position[r] = static_cast<std::ptrdiff_t>(kept.size());
            kept.push_back(r);
        }
    }
    result.dropped_units = table.rows.size() - kept.size();
    if (result.dropped_units > 0) {
        result.warnings.push_back(fmt::format("{}: dropped {} unit(s) with missing response or covariates",
                                              table.source, result.dropped_units));
    }
    if (kept.empty()) throw Error(Errc::ingest, fmt::format("{}: no complete units", table.source));
    result.data = Dataset(std::move(all_ids), std::move(columns)).subset(kept);

    struct RawMembership {
        std::string label;
        double weight;
        std::string where;
    };
    struct RawClassification {
        std::string name;
        std::string source;
        std::vector<std::vector<RawMembership>> by_unit;
    };
    std::vector<RawClassification> raw;

    for (const auto& path : membership_csvs) {
        const auto mt = read_csv(path);
        const auto c_unit = mt.column("unit_id");
        const auto c_cls = mt.column("classification");
        const auto c_cluster = mt.column("cluster_id");
        const auto c_weight = mt.column("weight");
        for (std::size_t r = 0; r < mt.rows.size(); ++r) {
            const auto& row = mt.rows[r];
            const auto where = at_line(mt, r);
            auto it = row_of.find(row[c_unit]);
            if (it == row_of.end()) {
                throw Error(Errc::ingest, fmt::format("{}: unknown unit_id '{}'", where, row[c_unit]));
            }
            if (row[c_cls].empty()) throw Error(Errc::ingest, fmt::format("{}: empty classification", where));
            if (row[c_cluster].empty()) throw Error(Errc::ingest, fmt::format("{}: empty cluster_id", where));
            auto weight = parse_double(row[c_weight]);
            if (!weight || !std::isfinite(*weight)) {
                throw Error(Errc::ingest, fmt::format("{}: cannot parse weight '{}'", where, row[c_weight]));
            }
            if (*weight < 0.0) throw Error(Errc::ingest, fmt::format("{}: negative weight {}", where, *weight));

            const auto pos = position[it->second];
            if (pos < 0) continue; // unit dropped as incomplete

            auto cls = std::find_if(raw.begin(), raw.end(), [&](const auto& c) { return c.name == row[c_cls]; });
            if (cls == raw.end()) {
                raw.push_back({row[c_cls], mt.source, std::vector<std::vector<RawMembership>>(kept.size())});
                cls = std::prev(raw.end());
            }
            auto& entries = cls->by_unit[static_cast<std::size_t>(pos)];
            for (const auto& e : entries) {
                if (e.label == row[c_cluster]) {
                    throw Error(Errc::ingest, fmt::format("{}: unit '{}' lists cluster '{}' twice (first at {})", where,
                                                          row[c_unit], e.label, e.where));
                }
            }
            entries.push_back({row[c_cluster], *weight, where});
        }
    }
    if (raw.empty()) throw Error(Errc::ingest, "no memberships were read");

    const auto& ids = result.data.unit_ids();
    for (auto& cls : raw) {
        std::set<std::string> label_set;
        for (const auto& entries : cls.by_unit) {
            for (const auto& e : entries) label_set.insert(e.label);
        }
        auto classification =
            std::make_shared<const Classification>(cls.name, std::vector<std::string>(label_set.begin(), label_set.end()));
        MembershipRows rows(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto& entries = cls.by_unit[i];
            if (entries.empty()) {
                throw Error(Errc::ingest, fmt::format("{}: unit '{}' has no memberships in classification '{}'",
                                                      cls.source, ids[i], cls.name));
            }
            double sum = 0.0;
            for (const auto& e : entries) sum += e.weight;
            if (!(sum > 0.0)) {
                throw Error(Errc::ingest, fmt::format("{}: unit '{}' has only zero weights", entries.front().where, ids[i]));
            }
            const bool rescale = options.normalize;
            if (!rescale && std::abs(sum - 1.0) > kRenormalizeTolerance) {
                throw Error(Errc::ingest,
                            fmt::format("{}: weights of unit '{}' in '{}' sum to {}; use --normalize for raw amounts",
                                        entries.front().where, ids[i], cls.name, sum));
            }
            for (const auto& e : entries) {
                const double w = rescale ? e.weight / sum : e.weight;
                rows[i].push_back({*classification->index_of(e.label), w});
            }
        }
        result.designs.emplace_back(classification, rows);
    }
    return result;
}

// -------------------------------------------------------------------------
// Output
// -------------------------------------------------------------------------

void write_dataset_csv(std::ostream& out, const Dataset& data) {
    out << "unit_id";
    for (const auto& [name, values] : data.columns()) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < data.n_units(); ++i) {
        out << data.unit_ids()[i];
        for (const auto& [name, values] : data.columns()) out << ',' << format_double(values[i]);
        out << '\n';
    }
}

void write_memberships_csv(std::ostream& out, const MembershipDesign& design,
                           const std::vector<std::string>& unit_ids) {
    if (unit_ids.size() != design.n_units()) throw Error(Errc::dimension, "unit id count does not match design");
    const auto& labels = design.classification().labels();
    out << "unit_id,classification,cluster_id,weight\n";
    for (std::size_t i = 0; i < design.n_units(); ++i) {
        for (const auto& e : design.row(i)) {
            out << unit_ids[i] << ',' << design.name() << ',' << labels[e.cluster] << ',' << format_double(e.weight)
                << '\n';
        }
    }
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::ingest, fmt::format("cannot write '{}'", path.string()));
    return out;
}

} // namespace

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    auto out = open_output(path);
    write_dataset_csv(out, data);
}

void write_memberships_csv(const std::filesystem::path& path, const MembershipDesign& design,
                           const std::vector<std::string>& unit_ids) {
    auto out = open_output(path);
    write_memberships_csv(out, design, unit_ids);
}

} // namespace mmfit
