#pragma once

#include <vector>

#include "gpsr/grassmann.hpp"

namespace gpsr {

using ParameterPoint = Vector;
using PointSet = std::vector<ParameterPoint>;

inline constexpr double kDefaultJitter = 1e-10;
inline constexpr double kMaxJitter = 1e-6;

enum class KernelFamily { SquaredExponential };

/// Correlation function on the parameter space.
///
/// A single length-scale is shared across all parameter dimensions; otherwise
/// there is one length-scale per dimension. The jitter is added to the
/// diagonal of correlation matrices only, never to kernel_eval().
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  Vector lengthscales;
  double jitter = kDefaultJitter;

  static KernelSpec squared_exponential(Vector lengthscales, double jitter = kDefaultJitter);

  bool shared() const noexcept { return lengthscales.size() == 1; }
  Index hyperparameter_count() const noexcept { return lengthscales.size(); }
  double lengthscale(Index dim) const { return shared() ? lengthscales(0) : lengthscales(dim); }

  /// Throws InvalidArgument / DimensionMismatch when the spec cannot be used
  /// with d-dimensional points.
  void validate(Index d) const;

  KernelSpec with_lengthscales(Vector beta) const;
};

double kernel_eval(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b);

/// [K]_ij = k(theta_i, theta_j) + jitter * delta_ij. Built from the lower
/// triangle, so it is exactly symmetric.
Matrix corr_matrix(const KernelSpec& spec, const PointSet& points);

/// (k(target, theta_i))_i
Vector corr_vector(const KernelSpec& spec, const PointSet& points, const ParameterPoint& target);

/// dk/dbeta_j for each hyperparameter. For a shared length-scale the single
/// entry sums the per-dimension contributions.
Vector kernel_grad(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b);

/// dK/dbeta_j, one l x l matrix per hyperparameter (zero diagonal).
std::vector<Matrix> corr_matrix_grad(const KernelSpec& spec, const PointSet& points);

/// Distance measured in length-scale units: ||(a - b) / beta||.
double scaled_distance(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b);

}  // namespace gpsr
