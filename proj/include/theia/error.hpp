#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace theia {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed query XML. Line and column are 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

/// A predicate or model parameter outside its contract.
class ParameterError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Budget too small for the requested operation.
class BudgetError : public Error {
public:
    BudgetError(const std::string& what, long required_minimum)
        : Error(what), required_minimum_(required_minimum) {}

    long required_minimum() const noexcept { return required_minimum_; }

private:
    long required_minimum_;
};

class FitError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

/// Input outside the domain of a mathematical operation (empty denominator set, ...).
class UndefinedInputError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Failure talking to a remote peer (partition agent, server).
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace theia
