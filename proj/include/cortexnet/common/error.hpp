#pragma once

#include <stdexcept>
#include <string>

namespace cortexnet {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io_error"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format_error"; }
};

class InvariantError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "invariant_error"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape_error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config_error"; }
};

class DivergenceError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "divergence_error"; }
};

}  // namespace cortexnet
