#pragma once

#include <stdexcept>
#include <string>

namespace opaseg {

// Error taxonomy mirrored by the CLI exit codes:
// validation -> 1, io -> 2, numerical -> 3.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace opaseg
