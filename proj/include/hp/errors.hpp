#pragma once

#include <stdexcept>
#include <string>

namespace hp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Solver-side failures map to CLI exit code 3.
struct SolverError : Error {
    using Error::Error;
};

struct AdmissibilityError : Error {
    using Error::Error;
};

struct SingularityError : SolverError {
    using SolverError::SolverError;
};

struct UnderConstrainedError : SolverError {
    using SolverError::SolverError;
};

struct EquilibriumError : SolverError {
    using SolverError::SolverError;
};

struct ConvergenceError : SolverError {
    using SolverError::SolverError;
};

// Cell problem does not isolate the dominant generalized force.
struct CellSizeError : SolverError {
    using SolverError::SolverError;
};

struct ConditioningError : SolverError {
    using SolverError::SolverError;
};

// Zero normalisation in the residual norm (unloaded interface).
struct DegenerateLoadError : SolverError {
    using SolverError::SolverError;
};

struct DivergenceError : ConvergenceError {
    using ConvergenceError::ConvergenceError;
};

struct GeometryError : Error {
    using Error::Error;
};

struct MeshMismatchError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct StaleBasisError : Error {
    using Error::Error;
};

// Config problems map to CLI exit code 4.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace hp
