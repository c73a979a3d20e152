#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

/// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent user configuration. The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing/unreadable inputs: directories, image files, manifests.
class DataError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition of a pure computation (metrics, ensembles, Grad-CAM).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace cxr
