#pragma once

#include <stdexcept>
#include <string>

namespace hrvvs {

/// Input data rejected by a shape or range precondition (e.g. a frame whose
/// sides are not divisible by the quartering/stride factors).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation contract (wrong argument range, missing state).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Inconsistent configuration or mismatched module dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset layout or mask content is invalid.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimisation diverged (non-finite loss).
class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hrvvs
