#pragma once

#include <stdexcept>
#include <string>

namespace lions {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The caller supplied input that violates an operation's precondition
/// (non-contractive coupling, indefinite operator, mismatched spaces, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A property the theory guarantees failed numerically. Either the input is
/// pathologically conditioned or there is a bug.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace lions
