#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oms {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied data that violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite or ill-conditioned quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// An observation arrived with a timestamp older than the last one stored for its label.
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Raised by the M-step when a component's total responsibility collapses.
class DegenerateComponentError : public Error {
 public:
  DegenerateComponentError(std::size_t component, double mass)
      : Error("component " + std::to_string(component) +
              " collapsed (total responsibility " + std::to_string(mass) + ")"),
        component_(component) {}

  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t component_;
};

}  // namespace oms
