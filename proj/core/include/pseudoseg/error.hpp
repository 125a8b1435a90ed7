#pragma once

#include <stdexcept>
#include <string>

namespace pseudoseg {

// Violated preconditions on arguments (bad parameters, shape mismatches).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Problems with on-disk inputs: missing files, malformed indices, bad folds.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A support or pseudo support mask with no foreground or no background pixels.
class DegenerateSupport : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Non-finite values produced during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pseudoseg
