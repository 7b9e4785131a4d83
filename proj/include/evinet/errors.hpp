#pragma once

#include <stdexcept>
#include <string>

namespace evinet {

// Error taxonomy mirrored by the CLI exit codes:
// validation_error -> 1, io_error -> 2, numeric_error -> 3.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& what) : std::runtime_error(what) {}
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace evinet
