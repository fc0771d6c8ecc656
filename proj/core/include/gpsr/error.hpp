#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpsr {

enum class ErrorKind {
  RankDeficient,
  DimensionMismatch,
  NotOrthonormal,
  CutLocus,
  BaseMismatch,
  NotPSD,
  ShapeMismatch,
  EmptySample,
  DegenerateWeights,
  TruncationOutOfRange,
  SingularCorrelation,
  SingularCovariance,
  DegenerateSpectrum,
  BadDimension,
  SingularStep,
  ZeroNorm,
  InsufficientNeighbors,
  InvalidArgument,
  Parse,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries one of the kinds above so
// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace gpsr
