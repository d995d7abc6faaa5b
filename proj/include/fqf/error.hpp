#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fqf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad parameters, shape mismatch, unknown names.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value or failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IntegrationError : public NumericalError {
public:
    IntegrationError(std::size_t segment, const std::string& what)
        : NumericalError("segment " + std::to_string(segment) + ": " + what), segment_(segment) {}

    std::size_t segment() const noexcept { return segment_; }

private:
    std::size_t segment_;
};

} // namespace fqf
