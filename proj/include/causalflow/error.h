#pragma once

#include <stdexcept>
#include <string>

namespace causalflow {

/// Caller broke an API precondition (shape mismatch, stale tape, bad sizes).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Optimization produced a non-finite value; the trial cannot continue.
class TrainingAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Value outside the domain of a transform (e.g. negative claims under log1p).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Iterative numerical routine failed to converge.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration or input data (missing columns, empty arms, too few records).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace causalflow
