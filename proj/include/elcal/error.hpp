#pragma once

#include <stdexcept>
#include <string>

namespace elcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (model file, measurement file, configuration file).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A sample that cannot be predicted: marker behind the camera or no torque equilibrium.
class InvalidSampleError : public Error {
 public:
  InvalidSampleError(std::size_t index, const std::string& what)
      : Error("sample " + std::to_string(index) + ": " + what), index_(index) {}

  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace elcal
