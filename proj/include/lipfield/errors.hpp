#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lipfield {

/// Shape or length mismatch between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the byte offset of the first problem.
struct ParseError : std::runtime_error {
    std::size_t offset;
    ParseError(const std::string& msg, std::size_t at)
        : std::runtime_error(msg + " (at byte " + std::to_string(at) + ")"), offset(at) {}
};

/// Failure to produce samples (e.g. empty zero set inside the box).
struct SamplingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// API misuse: a precondition on call order or object state was violated.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Non-finite value encountered where the math requires finiteness.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lipfield
