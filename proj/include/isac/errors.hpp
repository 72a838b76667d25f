#pragma once

#include <stdexcept>
#include <string>

namespace isac {

/// Process exit codes used by the CLI, grouped by error family.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    numeric_error = 4,
};

/// Base of all library errors. Carries the exit-code family.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode exit_code() const { return code_; }

private:
    ExitCode code_;
};

/// Invalid or inconsistent configuration (scenario JSON, dsp/tracker parameters).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::config_error, what) {}
};

/// Coincident positions or otherwise undefined geometry.
class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& what) : Error(ExitCode::numeric_error, what) {}
};

/// Dataset / file-format problems.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::data_error, what) {}
};

class FileMissingError : public DataError {
public:
    explicit FileMissingError(const std::string& what) : DataError(what) {}
};

class VersionError : public DataError {
public:
    explicit VersionError(const std::string& what) : DataError(what) {}
};

class LengthMismatchError : public DataError {
public:
    explicit LengthMismatchError(const std::string& what) : DataError(what) {}
};

/// Mismatched vector/matrix dimensions in a processing call.
class SizeError : public Error {
public:
    explicit SizeError(const std::string& what) : Error(ExitCode::data_error, what) {}
};

/// Numerical failure (non-positive innovation covariance, non-convergence, ...).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ExitCode::numeric_error, what) {}
};

/// Singular or ill-posed estimation geometry.
class DegeneracyError : public NumericError {
public:
    explicit DegeneracyError(const std::string& what) : NumericError(what) {}
};

/// Input too short / not periodic enough for the requested estimate.
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& what) : Error(ExitCode::data_error, what) {}
};

/// Out-of-order timestamps fed to an ordered stage.
class OrderingError : public Error {
public:
    explicit OrderingError(const std::string& what) : Error(ExitCode::data_error, what) {}
};

}  // namespace isac
