#pragma once

#include <stdexcept>
#include <string>

namespace gpmgc {

// Error hierarchy. Everything derives from std::runtime_error or
// std::invalid_argument so callers may catch at whatever granularity they need.

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Fewer samples than a statistic requires (distance statistics need M >= 4).
class TooFewSamples : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Factorization failures, non-finite objective values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An acquisition was asked for something its state does not carry.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// External objective process failed: timeout, malformed reply, child exit.
class ObjectiveFailure : public std::runtime_error {
 public:
  ObjectiveFailure(const std::string& what, std::string payload = {})
      : std::runtime_error(what), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

}  // namespace gpmgc
