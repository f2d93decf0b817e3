#pragma once

#include <stdexcept>
#include <string>

namespace stic {

// Caller violated an operation's precondition (empty input, missing field).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numeric parameter lies outside its declared closed range.
class ParameterRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Input that cannot be decoded (image file, JSON line, config text).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stic
