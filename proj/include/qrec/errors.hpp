#pragma once

#include <stdexcept>
#include <string>

namespace qrec {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain input values (negative dwell, bad token id).
class InputError : public Error {
 public:
  using Error::Error;
};

// Shape or structure mismatch between operands.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid or unknown configuration keys and values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing files, empty datasets, unparsable records.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace qrec
