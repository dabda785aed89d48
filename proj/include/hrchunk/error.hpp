#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hrchunk {

// Base of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CoNLL, trees, grammar, embedding or model files).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ArityError : public Error {
 public:
  ArityError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  // Byte offset of the offending node's opening bracket.
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class GrammarError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  explicit VocabularyError(const std::string& word)
      : Error("unknown terminal '" + word + "'"), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

class NoParseError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace hrchunk
