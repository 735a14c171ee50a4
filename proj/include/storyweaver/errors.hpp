#pragma once

#include <stdexcept>
#include <string>

namespace storyweaver {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Snapshot failed validation (corrupted, inconsistent or wrong version).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A search exceeded its label budget before proving optimality.
class SearchLimitError : public Error {
 public:
  using Error::Error;
};

// Session is busy with another mutating operation.
class BusyError : public Error {
 public:
  using Error::Error;
};

}  // namespace storyweaver
