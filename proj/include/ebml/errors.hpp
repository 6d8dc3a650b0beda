#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ebml {

// Dimension or batch-size disagreement between caller and callee.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value produced where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or unreadable experiment configuration. Carries every
// problem found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    std::string all = "config error";
    for (const auto& e : errors) {
      all += "\n  - ";
      all += e;
    }
    return all;
  }

  std::vector<std::string> errors_;
};

// Corrupt, truncated, or incompatible checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ebml
