#include "contreg/error.hpp"

namespace contreg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NonManifoldEdge: return "NonManifoldEdge";
    case ErrorCode::NonManifoldResult: return "NonManifoldResult";
    case ErrorCode::CollinearPoints: return "CollinearPoints";
    case ErrorCode::NoRealSolution: return "NoRealSolution";
    case ErrorCode::InsufficientDetections: return "InsufficientDetections";
    case ErrorCode::NoValidPose: return "NoValidPose";
    case ErrorCode::EmptySilhouette: return "EmptySilhouette";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::OutOfFrame: return "OutOfFrame";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateRanks: return "DegenerateRanks";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError:
      return 1;
    case ErrorCode::NoRealSolution:
    case ErrorCode::InsufficientDetections:
    case ErrorCode::NoValidPose:
    case ErrorCode::SingularNormalEquations:
      return 3;
    default:
      return 2;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace contreg
