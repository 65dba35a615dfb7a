#pragma once

#include <stdexcept>
#include <string>

namespace mmfit {

enum class Errc {
    invalid_weights,
    invalid_distance,
    isolated_area,
    dimension,
    singular_design,
    infeasible_cardinality,
    not_positive_definite,
    convergence,
    divergence,
    invalid_config,
    ingest,
};

// Broad failure classes; these map onto CLI exit codes 2, 3 and 4.
enum class ErrorCategory { data = 2, model = 3, numeric = 4 };

constexpr ErrorCategory category_of(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_weights:
    case Errc::invalid_distance:
    case Errc::isolated_area:
    case Errc::ingest:
        return ErrorCategory::data;
    case Errc::dimension:
    case Errc::singular_design:
    case Errc::infeasible_cardinality:
    case Errc::invalid_config:
        return ErrorCategory::model;
    case Errc::not_positive_definite:
    case Errc::convergence:
    case Errc::divergence:
        return ErrorCategory::numeric;
    }
    return ErrorCategory::model;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    Errc code_;
};

} // namespace mmfit
