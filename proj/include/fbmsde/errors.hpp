#pragma once

#include <stdexcept>
#include <string>

namespace fbmsde {

// Invalid or out-of-range user parameter (CLI exit code 2).
class ParameterError : public std::invalid_argument {
public:
    explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside the domain of an operation, e.g. a time outside [0, T].
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Parameter combination the operation does not support (e.g. H <= 1/2 for a H > 1/2 formula).
class UnsupportedParameterError : public std::invalid_argument {
public:
    explicit UnsupportedParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failure that is not the caller's fault (CLI exit code 1).
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& message) {
    if (!cond) throw ParameterError(message);
}

} // namespace detail
} // namespace fbmsde
