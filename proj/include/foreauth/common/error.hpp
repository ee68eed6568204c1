#pragma once

#include <stdexcept>
#include <string>

namespace foreauth {

/// Invalid configuration value (dimensions, hyperparameters, specs).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/matrix dimension violation.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Attention mask that leaves a query row with nothing to attend to.
struct MaskError : std::runtime_error {
    explicit MaskError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input value outside the documented domain (e.g. non-binary class target).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent dataset files.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Metric computation on degenerate inputs (empty score class, zero denominator).
struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value where the pipeline requires finite numbers.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace foreauth
