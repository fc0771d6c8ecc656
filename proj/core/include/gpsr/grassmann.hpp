#pragma once

#include <random>

#include <Eigen/Core>

namespace gpsr {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

inline constexpr double kOrthonormalTolerance = 1e-10;
inline constexpr double kHorizontalTolerance = 1e-8;
inline constexpr double kProjectionRankTolerance = 1e-12;
inline constexpr double kCutLocusMargin = 1e-8;

/// An n-by-k matrix with orthonormal columns: a Stiefel representation of a
/// k-dimensional subspace of R^n.
///
/// Construction checks max|X^T X - I| <= kOrthonormalTolerance. Use
/// project_pi() to obtain one from an arbitrary full-rank matrix.
class StiefelBasis {
 public:
  explicit StiefelBasis(Matrix columns);

  const Matrix& matrix() const noexcept { return m_; }
  Index n() const noexcept { return m_.rows(); }
  Index k() const noexcept { return m_.cols(); }

  /// Largest entry of |X^T X - I|.
  static double orthonormality_defect(const Matrix& x);

 private:
  Matrix m_;
};

/// Horizontal lift of a Grassmann tangent vector at a Stiefel representative:
/// base^T delta = 0.
class TangentVector {
 public:
  TangentVector(StiefelBasis base, Matrix delta);

  static TangentVector zero(const StiefelBasis& base);

  const StiefelBasis& base() const noexcept { return base_; }
  const Matrix& delta() const noexcept { return delta_; }
  double norm() const { return delta_.norm(); }

  TangentVector scaled(double factor) const;

 private:
  StiefelBasis base_;
  Matrix delta_;
};

/// pi(M) = V U^T from the thin SVD M = V S U^T.
StiefelBasis project_pi(const Matrix& m);

/// Principal angles between span(X) and span(Y), ascending, in [0, pi/2].
Vector principal_angles(const StiefelBasis& x, const StiefelBasis& y);

/// 2-norm of the principal angles.
double riemannian_distance(const StiefelBasis& x, const StiefelBasis& y);

/// Riemannian logarithm: L = (I - X X^T) Y (X^T Y)^{-1} = U S W^T,
/// log = U atan(S) W^T. Throws CutLocus when the largest principal angle is
/// within kCutLocusMargin of pi/2.
TangentVector grassmann_log(const StiefelBasis& x, const StiefelBasis& y);

/// Riemannian exponential: delta = U S W^T,
/// exp = pi(X W cos(S) W^T + U sin(S) W^T).
StiefelBasis grassmann_exp(const StiefelBasis& x, const TangentVector& delta);

Matrix standard_normal(Index rows, Index cols, Rng& rng);

/// Uniform draw from G(k, n), i.e. MACG(I_n).
StiefelBasis sample_uniform(Index n, Index k, Rng& rng);

/// Draw from MACG(S S^T) given the symmetric PSD factor S = sqrt_sigma.
StiefelBasis sample_macg(const Matrix& sqrt_sigma, Index k, Rng& rng);

}  // namespace gpsr
