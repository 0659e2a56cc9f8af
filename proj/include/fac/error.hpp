#pragma once

#include <stdexcept>
#include <string>

namespace fac {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries the offending row.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long row) : Error(what), row_(row) {}
    long row() const noexcept { return row_; }

private:
    long row_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace fac
