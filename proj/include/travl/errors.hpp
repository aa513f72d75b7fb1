#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace travl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violates an operation's precondition (bad coordinate, bad dimension).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A well-formed object violates a type invariant or two objects disagree on shape.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Text input could not be parsed. `line()` is 1-based; 0 means unknown.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A state the invariants rule out was reached anyway.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace travl
