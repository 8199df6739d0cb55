#pragma once

#include <stdexcept>
#include <string>

namespace poundkit {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, rows, manifests).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace poundkit
