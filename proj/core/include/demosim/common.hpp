#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace demosim {

// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent state between communicating peers (mixed schemes, steps, shapes).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime failure of an experiment (divergence, non-finite values). Exit code 1.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace demosim
