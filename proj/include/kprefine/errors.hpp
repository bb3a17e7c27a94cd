#pragma once

#include <stdexcept>
#include <string>

namespace kprefine {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularTransform : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class UnsupportedDetector : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class MissingField : public ParseError {
 public:
  MissingField(const std::string& field, std::size_t line)
      : ParseError("missing field '" + field + "'", line), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class MixedWarpIds : public Error {
 public:
  using Error::Error;
};

class EmptyPointSet : public Error {
 public:
  using Error::Error;
};

class EmptySeeds : public Error {
 public:
  using Error::Error;
};

class AllComponentsDropped : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kprefine
