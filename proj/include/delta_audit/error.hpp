#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace delta_audit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (CSV cells, invariant violations on a Dataset).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or learner hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inputs that do not line up: shapes, anchors, baseline provenance.
class MismatchError : public Error {
 public:
  using Error::Error;
};

class BridgeError : public Error {
 public:
  using Error::Error;
};

class BridgeTimeout : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

// Wraps any failure inside run_audit with the pipeline stage it came from.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, bool timeout = false)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)), timeout_(timeout) {}

  const std::string& stage() const { return stage_; }
  bool is_timeout() const { return timeout_; }

 private:
  std::string stage_;
  bool timeout_;
};

}  // namespace delta_audit
