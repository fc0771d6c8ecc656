#include "gpsr/error.hpp"

namespace gpsr {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotOrthonormal: return "NotOrthonormal";
    case ErrorKind::CutLocus: return "CutLocus";
    case ErrorKind::BaseMismatch: return "BaseMismatch";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::TruncationOutOfRange: return "TruncationOutOfRange";
    case ErrorKind::SingularCorrelation: return "SingularCorrelation";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorKind::BadDimension: return "BadDimension";
    case ErrorKind::SingularStep: return "SingularStep";
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::InsufficientNeighbors: return "InsufficientNeighbors";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

}  // namespace gpsr
