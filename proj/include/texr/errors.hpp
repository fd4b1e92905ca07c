#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace texr {

// CLI exit codes. 1 is reserved for unexpected failures.
enum class ExitCode : int {
    Ok = 0,
    Failure = 1,
    Validation = 2,
    Backend = 3,
    Integrity = 4,
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& msg, std::string prompt_hash = {})
        : std::runtime_error(msg), prompt_hash_(std::move(prompt_hash)) {}

    const std::string& prompt_hash() const { return prompt_hash_; }

private:
    std::string prompt_hash_;
};

class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContaminationError : public IntegrityError {
public:
    using IntegrityError::IntegrityError;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace texr
