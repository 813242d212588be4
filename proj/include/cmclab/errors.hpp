#pragma once

#include <stdexcept>

namespace cmclab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad parameters or configuration files.
struct ConfigError : Error { using Error::Error; };
// Requested band limit exceeds what a grid can resolve.
struct ResolutionError : Error { using Error::Error; };
// Argument outside the mathematical domain of an operation.
struct DomainError : Error { using Error::Error; };
// Metric degenerate: area element below threshold.
struct DegenerateImmersionError : Error { using Error::Error; };
// Non-positive enclosed volume.
struct OrientationError : Error { using Error::Error; };
// Perturbative smallness assumption violated.
struct OutOfRegimeError : Error { using Error::Error; };
// Iterative linear solve did not converge.
struct SolverError : Error { using Error::Error; };
// Picard iteration stopped contracting.
struct ConformalizationError : Error { using Error::Error; };
// Conformal defect too large for a downstream stage.
struct GaugeError : Error { using Error::Error; };
// Required normalization (volume, gauge) missing.
struct PreconditionError : Error { using Error::Error; };

}  // namespace cmclab
