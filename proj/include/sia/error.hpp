#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sia {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating input data (files, records, trees).
class DataError : public Error {
 public:
  using Error::Error;
};

// CoNLL-U syntax or tree error tied to a 1-based input line.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError(what + " at line " + std::to_string(line)), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Incompatible matrix shapes, mask sizes or checkpoint tensors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller passed an argument outside the documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace sia
