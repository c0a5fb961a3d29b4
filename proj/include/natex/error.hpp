#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace natex {

// Base class for all recoverable analysis errors. The message is the
// human-readable reason surfaced by the CLI and the HTTP API.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Bad column names, overlapping roles, out-of-range k, bad colors, ...
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace natex
