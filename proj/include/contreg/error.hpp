#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace contreg {

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  NonPositiveDepth,
  DegenerateGeometry,
  NonManifoldEdge,
  NonManifoldResult,
  CollinearPoints,
  NoRealSolution,
  InsufficientDetections,
  NoValidPose,
  EmptySilhouette,
  SingularNormalEquations,
  OutOfFrame,
  EmptyInput,
  DegenerateRanks,
};

std::string_view to_string(ErrorCode code);

/// Process exit status used by the command-line tool for a given error:
/// 1 usage/parse, 2 geometry/data, 3 algorithmic failure.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace contreg
