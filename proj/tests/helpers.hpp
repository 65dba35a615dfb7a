#pragma once
// Small builders shared by the unit tests.

#include "mmfit/core.hpp"
#include "mmfit/error.hpp"

#include <doctest.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace testing {

inline std::shared_ptr<const mmfit::Classification> classification(const std::string& name, std::size_t J) {
    std::vector<std::string> labels;
    for (std::size_t j = 0; j < J; ++j) labels.push_back(std::string(1, static_cast<char>('A' + j)));
    return std::make_shared<mmfit::Classification>(name, labels);
}

inline mmfit::MembershipDesign design(std::size_t J, const mmfit::MembershipRows& rows,
                                      const std::string& name = "teacher") {
    return mmfit::MembershipDesign(classification(name, J), rows);
}

inline std::vector<std::string> unit_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i + 1));
    return ids;
}

/// Runs fn and returns the error code it throws, or nullopt.
template <typename Fn>
std::optional<mmfit::Errc> error_code(Fn&& fn) {
    try {
        fn();
    } catch (const mmfit::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

} // namespace testing
