#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sketchforge {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable or unwritable file.
struct IoError : Error {
    using Error::Error;
};

// Bad magic, version or truncated payload.
struct FormatError : Error {
    using Error::Error;
};

// Precondition or invariant violated by caller-supplied data.
struct ValidationError : Error {
    using Error::Error;
};

// NaN/Inf encountered during optimisation.
struct NumericError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

}  // namespace sketchforge
