#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bioner {

// Base for every error raised by the toolkit. Callers that only want a
// diagnostic can catch this; the derived kinds let tests and the CLI tell
// failures apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text with a 1-based line number (0 when not applicable).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A structurally valid record that violates a file-format contract
// (dimension mismatch, duplicate id, missing field).
class FormatError : public ParseError {
 public:
  using ParseError::ParseError;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Transport or server failure after the retry budget is spent.
class ProviderError : public Error {
 public:
  using Error::Error;
};

// The provider answered, but not with the expected payload shape.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace bioner
