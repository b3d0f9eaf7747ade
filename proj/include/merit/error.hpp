#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace merit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/dimension disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values or a failed numerical routine.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace merit
