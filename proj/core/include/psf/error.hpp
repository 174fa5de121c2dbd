#pragma once

#include <stdexcept>
#include <string>

namespace psf {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configuration values, arguments, missing options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data files (corpora, schemas, manifests, features).
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: singular matrices, non-finite losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace psf
