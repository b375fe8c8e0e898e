#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace emm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied value violates a documented precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// A loss or gradient went non-finite during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input; carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const noexcept { return offset_; }
  // Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::uint64_t offset_;
  std::string detail_;
};

}  // namespace emm
