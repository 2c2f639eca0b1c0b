#pragma once

#include <stdexcept>
#include <string>

namespace meterfl {

// Error taxonomy; the CLI maps families to exit codes
// (config -> 1, data -> 2, training -> 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad run configuration: manifest keys, invalid hyperparameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Anything wrong with input data or the files that carry it.
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class PartitionError : public DataError {
public:
    using DataError::DataError;
};

// Failures while running the model or the federated loop.
class TrainingError : public Error {
public:
    using Error::Error;
};

class NumericError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class ShapeError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class ProbeError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

class AggregationError : public TrainingError {
public:
    using TrainingError::TrainingError;
};

} // namespace meterfl
