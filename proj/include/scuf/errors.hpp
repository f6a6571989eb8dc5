#pragma once

#include <stdexcept>
#include <string>

namespace scuf {

// Incompatible tensor or image shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad configuration values or unparsable config files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing, unreadable, or malformed input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loss or gradient became non-finite during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(long step, std::string term)
      : std::runtime_error("non-finite value in '" + term + "' at step " + std::to_string(step)),
        step_(step),
        term_(std::move(term)) {}

  long step() const { return step_; }
  const std::string& term() const { return term_; }

 private:
  long step_;
  std::string term_;
};

}  // namespace scuf
