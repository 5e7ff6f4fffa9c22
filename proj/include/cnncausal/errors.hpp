#pragma once

#include <stdexcept>
#include <string>

namespace cnncausal {

// Base for every error the library throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (probability outside (0,1), sd < 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Shapes that do not fit together.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Bad or insufficient input data: empty arm, non-binary treatment, unparsable cell.
class DataError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite loss while training a network.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

// Iterative solver hit its iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::string path) : Error(what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace cnncausal
