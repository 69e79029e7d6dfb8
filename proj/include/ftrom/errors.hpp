#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ftrom {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};

/// Mapping Jacobian determinant is (numerically) zero or negative where it
/// must be positive.
struct SingularMappingError : Error {
    using Error::Error;
};

struct SolverFailure : Error {
    SolverFailure(const std::string& msg, double residual_norm)
        : Error(msg), residual_norm(residual_norm) {}
    double residual_norm;
};

struct RegistrationFailure : Error {
    RegistrationFailure(const std::string& msg, std::vector<int> cells = {})
        : Error(msg), offending_cells(std::move(cells)) {}
    std::vector<int> offending_cells;
};

struct StorageError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NotFound : Error {
    using Error::Error;
};

}  // namespace ftrom
