#pragma once
#include <stdexcept>
#include <string>

namespace besovnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// shapes of two operands disagree
class ShapeError : public Error {
 public:
  using Error::Error;
};

// argument outside the admissible parameter range
class DomainError : public Error {
 public:
  using Error::Error;
};

// a network or stage exceeded its declared size or error budget
class EnvelopeError : public Error {
 public:
  using Error::Error;
};

// malformed document or config; path points at the offending node
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// forward replay of a tape did not reproduce the recording
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace besovnet
