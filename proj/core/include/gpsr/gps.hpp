#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "gpsr/grassmann.hpp"
#include "gpsr/kernel.hpp"

namespace gpsr {

/// |R_ii| / |R_11| cut-off for the numerical rank of the combined bases.
inline constexpr double kRankThreshold = 1e-10;
/// Weights with |v_i| below this fraction of max |v_j| are excluded.
inline constexpr double kWeightThreshold = 1e-12;
/// Targets within this scaled distance of a training point reuse its subspace.
inline constexpr double kExactMatchDistance = 1e-12;
/// A prediction is prior-dominated once eps^2 exceeds 1 - kPriorDominatedGap.
inline constexpr double kPriorDominatedGap = 1e-6;
inline constexpr Index kDenseOracleMaxN = 2000;

/// Output of the preprocessing pass over the training bases
/// X = [X_1 ... X_l] (n x kl):
///   gram         = X^T X
///   global_basis = V~, n x r with orthonormal columns
///   triangular   = R~, r x kl upper trapezoidal
///   pivot        = column permutation, X.col(pivot[j]) = (V~ R~).col(j)
struct GpsFactors {
  Matrix gram;
  Matrix global_basis;
  Matrix triangular;
  std::vector<Index> pivot;
  Index rank = 0;
};

/// A fitted GPS model. Immutable; copies share the underlying factors, and
/// with_kernel() swaps hyperparameters without recomputing the QR.
class GpsModel {
 public:
  /// Assembles a model from previously computed factors (e.g. loaded from
  /// disk). The factors are checked against the bases.
  GpsModel(PointSet points, std::vector<StiefelBasis> bases, KernelSpec kernel,
           GpsFactors factors);

  const PointSet& points() const;
  const std::vector<StiefelBasis>& bases() const;
  const KernelSpec& kernel() const noexcept { return kernel_; }

  Index n() const;
  Index k() const;
  Index l() const;
  Index d() const;
  Index rank() const;

  const Matrix& gram() const;
  const Matrix& global_basis() const;
  const std::shared_ptr<const Matrix>& shared_global_basis() const;
  const Matrix& triangular() const;
  const std::vector<Index>& pivot() const;
  /// C~ = R~ P~^T = V~^T X, r x kl.
  const Matrix& coordinates() const;
  bool has_coincident_points() const;

  /// K_l (with jitter) for the current kernel, and its inverse.
  const Matrix& correlation() const;
  const Matrix& correlation_inverse() const;
  Vector solve_correlation(const Vector& rhs) const;

  GpsModel with_kernel(KernelSpec kernel) const;

 private:
  struct Data;
  struct Correlation;

  GpsModel(std::shared_ptr<const Data> data, KernelSpec kernel);

  std::shared_ptr<const Data> data_;
  KernelSpec kernel_;
  std::shared_ptr<const Correlation> corr_;

  friend GpsModel fit(PointSet points, std::vector<StiefelBasis> bases, KernelSpec kernel);
};

/// Gram matrix and rank-revealing QR of the training bases.
GpsModel fit(PointSet points, std::vector<StiefelBasis> bases, KernelSpec kernel);

/// Refit without training point `index` (fresh QR of the remaining bases).
GpsModel leave_one_out(const GpsModel& model, Index index);

/// Factored predictive distribution MACG(Sigma) at a target point, with
/// Sigma = eps^2 I + (V~ V) diag(lambda) (V~ V)^T truncated to t directions.
struct PredictiveSubspace {
  std::shared_ptr<const Matrix> global_basis;  // V~, shared with the model
  Matrix local_directions;                     // r x t, orthonormal columns
  Vector principal_variances;                  // t entries, descending, >= 0
  double noise_variance = 1.0;                 // eps^2 in [0, 1]
  Index subspace_dim = 0;                      // k
  bool prior_dominated = false;
  /// Set when the target coincides with a training point.
  std::optional<StiefelBasis> exact_mean;
  /// Training points dropped because of vanishing weights.
  std::vector<Index> excluded_points;

  Index truncation() const noexcept { return local_directions.cols(); }
  Index rank() const noexcept { return local_directions.rows(); }

  /// Mean subspace span(V~ V[:, :k]); the training subspace on an exact match.
  StiefelBasis mean() const;
  /// V~ V, n x t. Costs O(n r t).
  Matrix principal_directions() const;
};

PredictiveSubspace predict(const GpsModel& model, const ParameterPoint& target, Index t);
inline PredictiveSubspace predict(const GpsModel& model, const ParameterPoint& target) {
  return predict(model, target, model.k());
}

/// Literal dense evaluation of the predictive covariance
/// Sigma = eps^2 I_n + X [XX^T (K~ (x) I_n) XX]^{-1} X^T with
/// K~ = (D_v K D_v)^{-1} and XX = blockdiag(X_i). Test oracle; n <= 2000.
Matrix predictive_covariance_dense(const GpsModel& model, const ParameterPoint& target);

/// Draw from MACG(Sigma) using
/// M = D diag(sqrt(lambda + eps^2) - eps) D^T Z + eps Z, D = V~ V.
StiefelBasis sample_predictive(const PredictiveSubspace& prediction, Rng& rng);

/// Random subspace-valued path: the first grid point is uniform, each later
/// one is drawn from the predictive distribution given the earlier draws.
std::vector<StiefelBasis> sample_path(const PointSet& grid, const KernelSpec& kernel, Index n,
                                      Index k, Rng& rng);

/// V^T A V for V = V~ V[:, :k], given A_r = V~^T A V~ (r x r).
Matrix reduced_operator(const PredictiveSubspace& prediction, const Matrix& a_r);

}  // namespace gpsr
