#pragma once

#include <stdexcept>
#include <string>

namespace ivdiag {

// Base class for every recoverable error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- configuration and usage problems (CLI exit code 1) --------------------

struct ConfigError : Error {
  using Error::Error;
};

// A requested significance level has no tabulated critical values.
struct UnsupportedAlphaError : ConfigError {
  using ConfigError::ConfigError;
};

// A documented precondition of an estimator was violated by the caller.
struct PreconditionError : ConfigError {
  using ConfigError::ConfigError;
};

// ---- data problems (CLI exit code 2) ---------------------------------------

struct ParseError : Error {
  using Error::Error;
};

struct IOError : Error {
  using Error::Error;
};

// ---- numerical degeneracy (CLI exit code 3) --------------------------------

struct NumericalError : Error {
  using Error::Error;
};

// Rank-deficient design; the message names the dependent columns.
struct CollinearityError : NumericalError {
  using NumericalError::NumericalError;
};

struct DegreesOfFreedomError : NumericalError {
  using NumericalError::NumericalError;
};

struct ClusterCountError : NumericalError {
  using NumericalError::NumericalError;
};

struct SingularVCovError : NumericalError {
  using NumericalError::NumericalError;
};

// First-stage fitted values carry essentially no variation.
struct DegenerateFirstStageError : NumericalError {
  using NumericalError::NumericalError;
};

// Too many bootstrap replicates had to be discarded.
struct BootstrapInstabilityError : NumericalError {
  using NumericalError::NumericalError;
};

}  // namespace ivdiag
