#pragma once

#include <stdexcept>
#include <string>

namespace distill {

// Every library failure derives from Error; the CLI maps the subclasses onto
// exit codes (2 validation, 3 backend exhaustion, 4 I/O).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class UndefinedScore : public Error {
public:
    using Error::Error;
};

class InvalidTemplate : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

class InvalidData : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class BackendExhausted : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace distill

namespace distill {

/// Process exit status for a failure: 2 validation, 3 backend exhaustion,
/// 4 I/O, 1 anything else.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const BackendExhausted*>(&e) != nullptr) return 3;
    if (dynamic_cast<const IoError*>(&e) != nullptr) return 4;
    if (dynamic_cast<const ConfigurationError*>(&e) != nullptr || dynamic_cast<const InvalidParameter*>(&e) != nullptr ||
        dynamic_cast<const InvalidInput*>(&e) != nullptr || dynamic_cast<const InvalidTemplate*>(&e) != nullptr ||
        dynamic_cast<const InvalidData*>(&e) != nullptr || dynamic_cast<const EmptyInput*>(&e) != nullptr ||
        dynamic_cast<const BudgetExceeded*>(&e) != nullptr || dynamic_cast<const UndefinedScore*>(&e) != nullptr) {
        return 2;
    }
    return 1;
}

/// A failure inside one pipeline stage, carrying the original exit status.
class StageError : public Error {
public:
    StageError(std::string stage, const std::exception& cause)
        : Error("stage " + stage + ": " + cause.what()), stage_(std::move(stage)), exit_code_(exit_code_for(cause)) {}

    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

}  // namespace distill
