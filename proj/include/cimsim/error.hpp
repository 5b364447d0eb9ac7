#pragma once

#include <stdexcept>
#include <string>

namespace cimsim {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ConfigErrorKind { Parse, Schema, Range };

/// Configuration problem tied to a dotted key path such as "mapping.cell_bits".
class ConfigError : public Error {
public:
    ConfigError(ConfigErrorKind kind, std::string key, const std::string& what)
        : Error(key.empty() ? what : key + ": " + what), kind_(kind), key_(std::move(key)) {}

    ConfigErrorKind kind() const noexcept { return kind_; }
    const std::string& key() const noexcept { return key_; }

private:
    ConfigErrorKind kind_;
    std::string key_;
};

/// Malformed or unsupported file content (NPY, JSON documents other than configs).
class FormatError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

}  // namespace cimsim
