#pragma once

#include <stdexcept>
#include <string>

namespace edm {

// Base of every error raised by the library. Callers that only want to
// report a failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A time or other scalar argument fell outside its admissible interval.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Vector or image dimensions do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of range or inconsistent with another one.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf appeared in a loss, a gradient or a sampler state.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents: bad headers, checksum mismatch, missing entries.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure (unreadable or unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace edm
