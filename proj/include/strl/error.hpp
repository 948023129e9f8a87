#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace strl {

/// Category of a failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
  configuration,
  argument,
  insufficient_data,
  convergence,
  contract,
  data_integrity,
  informative_channel,
  parse,
  io,
  numerical,
  golden_mismatch,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::configuration, m) {}
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error(ErrorKind::argument, m) {}
};

struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& m)
      : Error(ErrorKind::insufficient_data, m) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(ErrorKind::contract, m) {}
};

struct DataIntegrityError : Error {
  explicit DataIntegrityError(const std::string& m)
      : Error(ErrorKind::data_integrity, m) {}
};

/// Raised when eps10 + eps01 >= 1, i.e. the observed label carries no
/// information about the latent one.
struct InformativeChannelError : Error {
  explicit InformativeChannelError(const std::string& m)
      : Error(ErrorKind::informative_channel, m) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& m) : Error(ErrorKind::numerical, m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

struct GoldenMismatchError : Error {
  explicit GoldenMismatchError(const std::string& m)
      : Error(ErrorKind::golden_mismatch, m) {}
};

/// Newton/IRLS ran out of iterations. Carries the last iterate so callers can
/// inspect or warm-start from it.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& m, std::vector<double> last_iterate)
      : Error(ErrorKind::convergence, m), last_(std::move(last_iterate)) {}

  const std::vector<double>& last_iterate() const noexcept { return last_; }

 private:
  std::vector<double> last_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& m, std::size_t line)
      : Error(ErrorKind::parse, m + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace strl
