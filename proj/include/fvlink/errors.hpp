#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fvlink {

// Base of every error the library throws. Callers that only need a
// diagnostic can catch this and print what().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A row whose norm collapsed below the normalization floor.
class DegenerateEmbedding : public Error {
 public:
  using Error::Error;
};

// A score set with (near) zero spread, which cannot be z-normalized.
class DegenerateScores : public Error {
 public:
  DegenerateScores(const std::string& what, std::size_t system = npos)
      : Error(what), system_(system) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t system() const { return system_; }

 private:
  std::size_t system_;
};

// Malformed input file. line() is 1-based; 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : Error(format(file, line, msg)), file_(file), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& file, std::size_t line, const std::string& msg) {
    std::string out = file.empty() ? std::string("<input>") : file;
    if (line > 0) out += ":" + std::to_string(line);
    return out + ": " + msg;
  }

  std::string file_;
  std::size_t line_;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fvlink
