#pragma once

#include <stdexcept>
#include <string>

namespace ifrec {

// Base of every error the engine raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Malformed embedding / checkpoint / config file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Malformed interaction-log line. Message always carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that cannot be used: unknown keys, empty dataset, catalog mismatch.
class DataError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vectors and similar inputs that have no meaningful answer.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient; training aborts.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace ifrec
