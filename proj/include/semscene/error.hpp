#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace semscene {

// Base of every error raised by the library. The kind tag lets callers and
// tests distinguish failures without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    Parse,
    Vocabulary,
    Format,
    Dimension,
    Variant,
    Model,
    Argument,
    Compatibility,
    Io,
  };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(Kind::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline Error vocabulary_error(const std::string& w) { return Error(Error::Kind::Vocabulary, w); }
inline Error format_error(const std::string& w) { return Error(Error::Kind::Format, w); }
inline Error dimension_error(const std::string& w) { return Error(Error::Kind::Dimension, w); }
inline Error variant_error(const std::string& w) { return Error(Error::Kind::Variant, w); }
inline Error model_error(const std::string& w) { return Error(Error::Kind::Model, w); }
inline Error argument_error(const std::string& w) { return Error(Error::Kind::Argument, w); }
inline Error compatibility_error(const std::string& w) { return Error(Error::Kind::Compatibility, w); }
inline Error io_error(const std::string& w) { return Error(Error::Kind::Io, w); }

}  // namespace semscene
