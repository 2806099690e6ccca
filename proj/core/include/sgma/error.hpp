#pragma once

#include <stdexcept>
#include <string>

namespace sgma {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or image shapes that violate an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Missing or unreadable files while ingesting a dataset.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Data that was read successfully but fails a semantic check (label range, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A synthetic dataset description that cannot produce a usable dataset.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Operation requested in the wrong mode or with arguments outside its contract.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Training diverged (non-finite loss) or otherwise cannot continue.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace sgma
