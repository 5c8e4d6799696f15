#pragma once

#include <stdexcept>
#include <string>

namespace seqdisc {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument or configuration (the CLI maps these to exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A value that should be finite turned out not to be (NaN / inf loss, divergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqdisc
