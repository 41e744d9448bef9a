#pragma once

#include <stdexcept>
#include <string>

namespace glitchsim {

// Malformed or out-of-contract input: bad dimensions, invalid configs,
// unparseable files. The CLI maps this to exit status 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Campaign slice does not satisfy the one-input-per-class protocol.
class ProtocolError : public InputError {
 public:
  using InputError::InputError;
};

class OutOfTraceError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace glitchsim
