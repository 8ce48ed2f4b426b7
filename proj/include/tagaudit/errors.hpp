#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tagaudit {

/// Base class for all recoverable toolchain errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input document (bad JSON shape, wrong version, broken invariant).
struct SchemaError : Error {
    using Error::Error;
};

/// A referenced id does not resolve to any known function or type.
struct DanglingReference : Error {
    using Error::Error;
};

/// Two facts share the same id.
struct DuplicateId : Error {
    using Error::Error;
};

/// Lookup of a type id that does not exist.
struct UnknownType : Error {
    using Error::Error;
};

/// A tag registered as compound has no expansion to apply.
struct UnknownCompound : Error {
    using Error::Error;
};

/// Safety-property expression does not conform to the grammar.
struct SyntaxError : Error {
    SyntaxError(const std::string& msg, std::size_t offset, std::string expected_tokens)
        : Error(msg), offset(offset), expected(std::move(expected_tokens)) {}

    std::size_t offset;
    std::string expected;
};

}  // namespace tagaudit
