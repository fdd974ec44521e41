#ifndef BXT_ERRORS_HPP
#define BXT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bxt {

/// Base error for all toolkit failures. The message always starts with a
/// stable category phrase (e.g. "payload length mismatch") so callers and
/// scripts can match on it.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

} // namespace bxt

#endif
