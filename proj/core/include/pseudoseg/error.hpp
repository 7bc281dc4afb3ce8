#pragma once

#include <stdexcept>
#include <string>

namespace pseudoseg {

// Every failure carries the name of the module that raised it so the CLI can
// report "<module>: <what>" and map the error family to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Bad inputs: malformed files, size mismatches, invalid parameters.
class DataError : public Error {
 public:
  using Error::Error;
};

// Failures inside the segmentation backend or its exchange protocol.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

class TensorFormatError : public BackendError {
 public:
  using BackendError::BackendError;
};

class DimensionMismatchError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace pseudoseg
