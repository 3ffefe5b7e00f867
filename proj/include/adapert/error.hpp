#ifndef ADAPERT_ERROR_HPP
#define ADAPERT_ERROR_HPP

#include <stdexcept>
#include <string>

/**
 * @file error.hpp
 * @brief Exception hierarchy shared by every module.
 *
 * Each category maps onto a process exit code used by the command-line tool.
 */

namespace adapert {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Bad arguments or configuration (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Operand shapes do not agree.
class DimensionError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Malformed input files or inconsistent data (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// NaN/Inf during optimization or a failed numerical precondition (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// A statistic is undefined for the given input (e.g. correlation of a constant vector).
class DegenerateInputError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

} // namespace adapert

#endif
