#pragma once

#include <stdexcept>
#include <string>

namespace sdna {

// Subset indices out of range, empty, or not strictly increasing.
class InvalidSubsetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A principal block turned out singular or indefinite during factorization.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampling specification violates properness/nonvacuity, or an operation
// received a sampling it does not support (e.g. non-uniform where uniform
// is required).
class SamplingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Exact enumeration was requested over a support too large to enumerate.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A solver run violated one of its invariants (divergence, dual descent).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (LIBSVM parse failures carry line/column info).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sdna
