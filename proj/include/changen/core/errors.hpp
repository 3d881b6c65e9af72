#pragma once

#include <stdexcept>
#include <string>

namespace changen {

// Error taxonomy shared by all modules. Everything derives from
// std::runtime_error so callers can catch broadly at the CLI boundary.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raster/tensor shape violations.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Out-of-range or inconsistent parameter values.
struct ParameterError : Error {
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// Missing keys (e.g. unknown instance id).
struct LookupError : Error {
    explicit LookupError(const std::string& msg) : Error(msg) {}
};

// File format / serialization failures, including checksum mismatches.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace changen
