#pragma once

#include <stdexcept>
#include <string>

namespace busoff {

/// Input rejected before any computation: bad dimensions, non-finite
/// entries, probabilities out of range, malformed config.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A Riccati iteration failed to reach a fixed point.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The bus-off state is unreachable (collision probability zero).
class InfiniteHittingTimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace busoff
