#pragma once

#include <stdexcept>
#include <string>

namespace helix {

/// Root of every error thrown by the library. `category()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { usage, data, numeric };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(Category::data, what) {}
};

// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Category::usage, what) {}
};

// Violated operation precondition (empty inputs, wrong loss rank, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(Category::data, what) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(Category::data, what) {}
};

// Dataset content problems (no observations, unreachable corruption rate, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

// CSV / JSON parse failure with a location.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(Category::data, what) {}
};

// NaN/Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Category::numeric, what) {}
};

// Checkpoint container damaged: bad magic, truncated payload, bad header.
class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& what) : Error(Category::data, what) {}
};

// Checkpoint manifest disagrees with the model the header describes.
class ManifestError : public CorruptionError {
 public:
  explicit ManifestError(const std::string& what) : CorruptionError(what) {}
};

}  // namespace helix
