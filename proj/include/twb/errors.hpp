#pragma once

#include <stdexcept>
#include <string>

namespace twb {

// Base for everything thrown by this library. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Parameter outside its domain (negative b, mu <= 0, eta outside [0,1], ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// A statistic is undefined on the given data (zero variance, zero mean, ...).
class UndefinedStatisticError : public Error {
public:
    explicit UndefinedStatisticError(const std::string& msg) : Error(msg) {}
};

// eta_from_R requested on data with R >= 1.
class ClassicalDataError : public Error {
public:
    explicit ClassicalDataError(const std::string& msg) : Error(msg) {}
};

// mode_estimate requested on a sub-Poissonian marginal.
class SubPoissonianError : public Error {
public:
    explicit SubPoissonianError(const std::string& msg) : Error(msg) {}
};

// Invalid run/sweep configuration (duplicate labels, zero shots, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Alternating-sum cancellation exceeded the accuracy budget.
class PrecisionError : public Error {
public:
    explicit PrecisionError(const std::string& msg) : Error(msg) {}
};

// Coefficient sequence does not decay; grid values would be meaningless.
class SingularError : public Error {
public:
    explicit SingularError(const std::string& msg) : Error(msg) {}
};

// Quadrature grid does not cover the kernel mass.
class CoverageError : public Error {
public:
    explicit CoverageError(const std::string& msg) : Error(msg) {}
};

// Constraint set infeasible for the model family.
class ModelMismatchError : public Error {
public:
    explicit ModelMismatchError(const std::string& msg) : Error(msg) {}
};

// Optimizer failed to converge; carries the best parameters seen.
class FitError : public Error {
public:
    FitError(const std::string& msg, double residual) : Error(msg), best_residual(residual) {}
    double best_residual;
};

// Malformed input text (CSV/JSON structure).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Structurally valid input with invalid values (negative counts, ...).
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// JSON schema version mismatch.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

} // namespace twb
