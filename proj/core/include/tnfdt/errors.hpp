#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tnfdt {

// Tensor dimensions that are invalid or do not agree between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (k = 0, bad label, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// API misuse, e.g. backward without a preceding forward.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed on-disk data. `field()` names the offending header field or record.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Dataset content cannot satisfy a request (e.g. a class without images).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or parameter.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace tnfdt
