// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kreinlab {

// Bad shapes, out-of-range parameters, inconsistent inputs.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A spectral parameter hit (or came numerically too close to) the spectrum.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, double condition = 0.0)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

// Failed model hypotheses: ellipticity, degenerate boundary rows, ...
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or command line usage.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& what, std::string pointer = {})
      : std::runtime_error(pointer.empty() ? what : pointer + ": " + what),
        pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace kreinlab
