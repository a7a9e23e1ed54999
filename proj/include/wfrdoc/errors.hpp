#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wfrdoc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A document with no usable tokens left after preprocessing / OOV removal.
class DegenerateDocumentError : public Error {
 public:
  explicit DegenerateDocumentError(std::string id)
      : Error("degenerate document '" + id + "': no in-vocabulary tokens"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

/// Non-finite potentials produced inside a Sinkhorn stage.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t stage)
      : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

/// Balanced transport impossible: some row or column has only infinite costs.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace wfrdoc
