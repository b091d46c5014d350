#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gik {

// Base of every error the library throws. The CLI maps the kind onto its
// exit codes (usage 1, data 2, invariant 3).
class Error : public std::runtime_error {
 public:
  enum class Kind { Usage, Parse, Range, Io, Invariant };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Malformed input. `line` is 1-based when the source is line oriented, and
// `offset` is the token offset for token-sequence grammars; 0 when unknown.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0, std::size_t offset = 0)
      : Error(Kind::Parse, decorate(what, line)), line_(line), offset_(offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  static std::string decorate(const std::string& what, std::size_t line) {
    if (line == 0) return what;
    return "line " + std::to_string(line) + ": " + what;
  }

  std::size_t line_;
  std::size_t offset_;
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what, std::size_t line = 0)
      : Error(Kind::Range, line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Kind::Io, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(Kind::Usage, what) {}
};

// A library precondition the caller was responsible for was violated.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(Kind::Invariant, what) {}
};

}  // namespace gik
