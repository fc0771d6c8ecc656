#pragma once

#include <optional>
#include <vector>

#include "gpsr/grassmann.hpp"
#include "gpsr/kernel.hpp"

namespace gpsr {

enum class InterpScheme { Lagrange1D, MultiquadricRBF };

struct InterpConfig {
  Index neighbors = 3;  // n_r >= 2
  InterpScheme scheme = InterpScheme::Lagrange1D;
  /// Multiquadric shape c; defaults to the mean nearest-neighbor spacing of
  /// the selected neighbors in normalized coordinates.
  std::optional<double> rbf_shape;
};

struct NeighborSelection {
  Index reference = 0;         // nearest sample
  std::vector<Index> indices;  // n_r nearest, nearest first
};

/// Nearest n_r samples by Euclidean distance after scaling every coordinate
/// by the sample range; ties go to the lower index.
NeighborSelection select_neighbors(const ParameterPoint& target, const PointSet& points,
                                   Index count);

/// Tangent-space interpolation: log-map the neighbors at the reference
/// subspace, interpolate the tangent vectors entrywise (Lagrange in 1-d,
/// multiquadric RBF otherwise), project horizontally and map back with exp.
StiefelBasis subspace_interpolate(const ParameterPoint& target, const PointSet& points,
                                  const std::vector<StiefelBasis>& bases,
                                  const InterpConfig& config);

}  // namespace gpsr
