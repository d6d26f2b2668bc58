#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace knowdit {

// Base for all domain errors so callers can catch the whole family.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Graph schema violations: bad endpoint kinds, second Has edge into a
// finding, dangling endpoints.
struct SchemaViolation : Error {
    using Error::Error;
};

struct KindMismatch : Error {
    using Error::Error;
};

struct NotFound : Error {
    using Error::Error;
};

struct UnsupportedVersion : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset = 0;
};

struct EmptyProject : Error {
    using Error::Error;
};

struct UnboundPlaceholder : Error {
    explicit UnboundPlaceholder(const std::string& name)
        : Error("unbound placeholder: " + name), placeholder(name) {}
    std::string placeholder;
};

struct BudgetExhausted : Error {
    using Error::Error;
};

struct MalformedOutput : Error {
    using Error::Error;
};

struct ProviderError : Error {
    using Error::Error;
};

struct DanglingMergeTarget : Error {
    using Error::Error;
};

struct ClassificationEmpty : Error {
    using Error::Error;
};

struct ValidationFailed : Error {
    using Error::Error;
};

struct StructuralCheckFailed : Error {
    using Error::Error;
};

struct AttributionMismatch : Error {
    using Error::Error;
};

struct ToolchainCrash : Error {
    using Error::Error;
};

struct RunFailed : Error {
    using Error::Error;
};

// Caller violated a documented precondition; always a programming error.
struct PreconditionViolation : Error {
    using Error::Error;
};

}  // namespace knowdit
