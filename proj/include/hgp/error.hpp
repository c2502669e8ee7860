#pragma once

#include <stdexcept>
#include <string>

namespace hgp {

// Base class for every error raised by the library. `kind()` is the short
// machine-readable tag the CLI puts into its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class LoadError : public Error {
public:
    explicit LoadError(const std::string& what) : Error("load_error", what) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error("contract_error", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric_error", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

} // namespace hgp
