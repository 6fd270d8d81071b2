#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hgx {

/// Failure categories surfaced by the library. The CLI maps these onto exit
/// codes and structured error payloads.
enum class ErrorKind {
  NodeIdOutOfRange,
  EmptyEdge,
  NonpositiveWeight,
  NotUniform,
  TooLarge,
  ShapeMismatch,
  NonPositiveInput,
  NegativeBase,
  ZeroNormRow,
  ZeroNormalizer,
  DegenerateEdge,
  EmptyMask,
  EmptyMultiset,
  NonScalarOutput,
  TooFewNodes,
  TooFewRuns,
  TooManyClasses,
  Divergence,
  ParseError,
  DimensionMismatch,
  LabelOutOfRange,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace hgx
