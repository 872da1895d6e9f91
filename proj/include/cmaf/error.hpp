#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace cmaf {

enum class ErrorKind {
    invalid_argument,
    grid_too_coarse,
    non_convergence,
    validation,   // data violates a declared hypothesis (bad g, kappa_h too small, ...)
    precondition, // a check could not run because its inputs do not qualify
    internal,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::grid_too_coarse: return "grid_too_coarse";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::validation: return "validation";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

/// Library error. `detail` carries machine-readable context (offending sample,
/// last residual, ...) that the CLI forwards into its error JSON.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, nlohmann::json detail = nlohmann::json::object())
        : std::runtime_error(message), kind_(kind), detail_(std::move(detail)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

    nlohmann::json to_json() const {
        return {{"kind", to_string(kind_)}, {"message", what()}, {"detail", detail_}};
    }

private:
    ErrorKind kind_;
    nlohmann::json detail_;
};

} // namespace cmaf
