#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vista {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
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

// Malformed text input; line is 1-based, 0 when unknown.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : IoError(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (relative residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Failure talking to an external denoiser process.
class BridgeError : public Error {
 public:
  enum class Kind { timeout, malformed_frame, dims_mismatch, server_error, transport };

  BridgeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace vista
