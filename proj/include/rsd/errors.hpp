#pragma once

#include <stdexcept>
#include <string>

namespace rsd {

/// Bad argument or violated precondition.
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical procedure failed (quadrature non-convergence, singular solve,
/// optimizer breakdown). The message carries diagnostics.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured-text input violates the documented schema. `path()` is the
/// offending field, dot-separated from the document root.
class schema_error : public std::runtime_error {
 public:
  schema_error(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace rsd
