#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sspod {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree, or a matrix is empty.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A decomposition found no singular value above the rank tolerance.
class RankError : public Error {
public:
    using Error::Error;
};

/// A scalar parameter lies outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be invertible (or positive definite) is not.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// The k-th and (k+1)-th singular values are not separated, so the
/// principal subspace map is undefined at this input.
class GapError : public Error {
public:
    using Error::Error;
};

/// An input violates a documented precondition (e.g. non-orthonormal modes).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Newton iteration did not reach the requested tolerance.
class IterationError : public Error {
public:
    IterationError(const std::string& what, double last_residual, int iterations)
        : Error(what), last_residual_(last_residual), iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

/// Wraps a failure raised while producing one ensemble member.
class SampleError : public Error {
public:
    SampleError(std::size_t index, const std::string& what)
        : Error("sample " + std::to_string(index) + ": " + what), index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace sspod
