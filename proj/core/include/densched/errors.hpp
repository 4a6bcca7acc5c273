#pragma once

#include <stdexcept>
#include <string>

namespace densched {

// Caller passed a value outside the documented domain (sigma not in (0,1),
// dense count exceeding the sequence length, inverted ranges, ...).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// A rule file or scheduler config failed structural validation at load time.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One record of an input stream violates the corpus schema. Loaders catch
// this per line and turn it into a reject entry instead of aborting.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be opened, read, or written.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace densched
