#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modrobust {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A computation produced or consumed a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A metric is mathematically undefined for its inputs (e.g. constant series).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Input text could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parsed data violates the declared schema (dims, ranges, uniqueness).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A data source holds no records.
class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

/// Training diverged. Carries the 1-based epoch at which it happened.
class TrainingError : public Error {
public:
    TrainingError(std::size_t epoch, const std::string& what)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace modrobust
