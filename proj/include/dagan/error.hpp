#pragma once

#include <stdexcept>
#include <string>

namespace dagan {

// Bad caller input: wrong shapes, out-of-range options.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Data that parsed but violates an invariant (e.g. a pair with mismatched shapes).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dagan
