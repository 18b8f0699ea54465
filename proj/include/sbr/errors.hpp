#pragma once

#include <stdexcept>
#include <string>

namespace sbr {

/// Input file lacks a column required by the schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single cell could not be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Data violates a modelling precondition (e.g. z > z_alt for a containing pair).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A log density or gradient evaluated to a non-finite value.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& block, const std::string& what)
      : std::runtime_error(what), block_(block) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

}  // namespace sbr
