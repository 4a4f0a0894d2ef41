#pragma once

#include <stdexcept>
#include <string>

namespace mscg {

// Raised for malformed or out-of-range configuration input.  The CLI maps
// this to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a numerical stage fails (singular factorization, divergent
// iteration, malformed model file).  The CLI maps this to exit code 3.
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mscg
