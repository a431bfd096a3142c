#pragma once

#include <stdexcept>
#include <string>

namespace pccf {

// Runtime failures (I/O, malformed files, degenerate data).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller passed arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

} // namespace pccf
