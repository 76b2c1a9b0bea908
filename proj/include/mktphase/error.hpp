#pragma once

#include <stdexcept>
#include <string>

namespace mktphase {

/// Input or configuration violates a precondition (CLI exit code 1).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical stage failed on otherwise valid input (CLI exit code 2).
class ComputeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mktphase
