#ifndef WDEOS_ERROR_HPP
#define WDEOS_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace wdeos {

enum class ErrorCode {
  invalid_argument = 1,
  not_converged = 2,
  overflow = 3,
  parse = 4,
  io = 5,
  diverged = 6,
};

/// Base class of every error thrown by the library. The C API maps `code()`
/// onto its status enum one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

/// Iterative solver ran out of budget. Carries the best estimates seen so far
/// and their residual norms (same ordering).
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> estimates,
                   std::vector<double> residuals)
      : Error(ErrorCode::not_converged, what),
        estimates_(std::move(estimates)),
        residuals_(std::move(residuals)) {}

  const std::vector<double>& estimates() const noexcept { return estimates_; }
  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> estimates_;
  std::vector<double> residuals_;
};

/// Non-finite value produced inside a network layer.
class OverflowError : public Error {
 public:
  OverflowError(std::size_t layer, const std::string& stage)
      : Error(ErrorCode::overflow,
              "non-finite " + stage + " in layer " + std::to_string(layer)),
        layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(ErrorCode::parse, what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(ErrorCode::diverged, what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace wdeos

#endif  // WDEOS_ERROR_HPP
