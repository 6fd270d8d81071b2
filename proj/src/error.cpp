#include "hgx/error.hpp"

namespace hgx {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NodeIdOutOfRange: return "NodeIdOutOfRange";
    case ErrorKind::EmptyEdge: return "EmptyEdge";
    case ErrorKind::NonpositiveWeight: return "NonpositiveWeight";
    case ErrorKind::NotUniform: return "NotUniform";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonPositiveInput: return "NonPositiveInput";
    case ErrorKind::NegativeBase: return "NegativeBase";
    case ErrorKind::ZeroNormRow: return "ZeroNormRow";
    case ErrorKind::ZeroNormalizer: return "ZeroNormalizer";
    case ErrorKind::DegenerateEdge: return "DegenerateEdge";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::EmptyMultiset: return "EmptyMultiset";
    case ErrorKind::NonScalarOutput: return "NonScalarOutput";
    case ErrorKind::TooFewNodes: return "TooFewNodes";
    case ErrorKind::TooFewRuns: return "TooFewRuns";
    case ErrorKind::TooManyClasses: return "TooManyClasses";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace hgx
