#include "gpsr/grassmann.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "gpsr/error.hpp"

namespace gpsr {

namespace {

void require_same_shape(const StiefelBasis& x, const StiefelBasis& y, const char* op) {
  if (x.n() != y.n() || x.k() != y.k()) {
    std::ostringstream msg;
    msg << op << ": bases are " << x.n() << "x" << x.k() << " and " << y.n() << "x"
        << y.k();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

}  // namespace

double StiefelBasis::orthonormality_defect(const Matrix& x) {
  if (x.cols() == 0) return 0.0;
  const Matrix gram = x.transpose() * x;
  return (gram - Matrix::Identity(x.cols(), x.cols())).cwiseAbs().maxCoeff();
}

StiefelBasis::StiefelBasis(Matrix columns) : m_(std::move(columns)) {
  if (m_.cols() < 1 || m_.cols() > m_.rows()) {
    std::ostringstream msg;
    msg << "need 1 <= k <= n, got " << m_.rows() << "x" << m_.cols();
    throw Error(ErrorKind::ShapeMismatch, msg.str());
  }
  if (!m_.allFinite()) throw Error(ErrorKind::NotOrthonormal, "non-finite entries");
  const double defect = orthonormality_defect(m_);
  if (!(defect <= kOrthonormalTolerance)) {
    std::ostringstream msg;
    msg << "max |X^T X - I| = " << defect;
    throw Error(ErrorKind::NotOrthonormal, msg.str());
  }
}

TangentVector::TangentVector(StiefelBasis base, Matrix delta)
    : base_(std::move(base)), delta_(std::move(delta)) {
  if (delta_.rows() != base_.n() || delta_.cols() != base_.k()) {
    throw Error(ErrorKind::ShapeMismatch, "tangent vector shape differs from its base");
  }
  const double defect =
      delta_.size() == 0 ? 0.0 : (base_.matrix().transpose() * delta_).cwiseAbs().maxCoeff();
  if (!(defect <= kHorizontalTolerance)) {
    std::ostringstream msg;
    msg << "tangent vector is not horizontal: max |X^T D| = " << defect;
    throw Error(ErrorKind::BaseMismatch, msg.str());
  }
}

TangentVector TangentVector::zero(const StiefelBasis& base) {
  return TangentVector(base, Matrix::Zero(base.n(), base.k()));
}

TangentVector TangentVector::scaled(double factor) const {
  return TangentVector(base_, factor * delta_);
}

StiefelBasis project_pi(const Matrix& m) {
  if (m.cols() < 1 || m.cols() > m.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "project_pi needs an n x k matrix with 1 <= k <= n");
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (!(s(0) > 0.0) || !(s(s.size() - 1) >= kProjectionRankTolerance * s(0))) {
    std::ostringstream msg;
    msg << "sigma_k / sigma_1 = " << (s(0) > 0.0 ? s(s.size() - 1) / s(0) : 0.0);
    throw Error(ErrorKind::RankDeficient, msg.str());
  }
  return StiefelBasis(svd.matrixU() * svd.matrixV().transpose());
}

Vector principal_angles(const StiefelBasis& x, const StiefelBasis& y) {
  require_same_shape(x, y, "principal_angles");
  const Matrix cross = x.matrix().transpose() * y.matrix();
  const Vector cosines = Eigen::JacobiSVD<Matrix>(cross).singularValues();  // descending
  // acos loses half the digits near 0, so small angles come from the sines.
  const Matrix residual = y.matrix() - x.matrix() * cross;
  const Vector sines = Eigen::JacobiSVD<Matrix>(residual).singularValues();
  const Index k = cosines.size();
  Vector angles(k);
  for (Index j = 0; j < k; ++j) {
    const double c = std::clamp(cosines(j), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - j), 0.0, 1.0);
    angles(j) = c * c >= 0.5 ? std::asin(s) : std::acos(c);
  }
  return angles;
}

double riemannian_distance(const StiefelBasis& x, const StiefelBasis& y) {
  return principal_angles(x, y).norm();
}

TangentVector grassmann_log(const StiefelBasis& x, const StiefelBasis& y) {
  require_same_shape(x, y, "grassmann_log");
  const Vector angles = principal_angles(x, y);
  if (angles.maxCoeff() >= std::numbers::pi / 2 - kCutLocusMargin) {
    std::ostringstream msg;
    msg << "largest principal angle " << angles.maxCoeff() << " reaches pi/2";
    throw Error(ErrorKind::CutLocus, msg.str());
  }
  const Matrix& xm = x.matrix();
  const Matrix xty = xm.transpose() * y.matrix();
  const Matrix residual = y.matrix() - xm * xty;
  // L = residual * (X^T Y)^{-1}, solved from the transposed system.
  const Matrix l = xty.transpose().partialPivLu().solve(residual.transpose()).transpose();
  Eigen::JacobiSVD<Matrix> svd(l, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector theta = svd.singularValues().unaryExpr([](double s) { return std::atan(s); });
  Matrix delta = svd.matrixU() * theta.asDiagonal() * svd.matrixV().transpose();
  delta -= xm * (xm.transpose() * delta);
  return TangentVector(x, std::move(delta));
}

StiefelBasis grassmann_exp(const StiefelBasis& x, const TangentVector& delta) {
  require_same_shape(x, delta.base(), "grassmann_exp");
  const double scale = std::max(1.0, x.matrix().cwiseAbs().maxCoeff());
  if ((x.matrix() - delta.base().matrix()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::BaseMismatch, "tangent vector is based at a different representative");
  }
  Eigen::JacobiSVD<Matrix> svd(delta.delta(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Matrix& w = svd.matrixV();
  const Vector c = s.array().cos();
  const Vector sn = s.array().sin();
  const Matrix moved = x.matrix() * w * c.asDiagonal() * w.transpose() +
                       svd.matrixU() * sn.asDiagonal() * w.transpose();
  return project_pi(moved);
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, cols);
  // Column-major fill keeps draws reproducible regardless of Eigen internals.
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) z(i, j) = normal(rng);
  }
  return z;
}

StiefelBasis sample_uniform(Index n, Index k, Rng& rng) {
  if (k < 1 || k > n) throw Error(ErrorKind::ShapeMismatch, "sample_uniform needs 1 <= k <= n");
  return project_pi(standard_normal(n, k, rng));
}

StiefelBasis sample_macg(const Matrix& sqrt_sigma, Index k, Rng& rng) {
  if (sqrt_sigma.rows() != sqrt_sigma.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "sample_macg needs a square factor");
  }
  const Index n = sqrt_sigma.rows();
  if (k < 1 || k > n) throw Error(ErrorKind::ShapeMismatch, "sample_macg needs 1 <= k <= n");
  const double scale = std::max(1.0, sqrt_sigma.cwiseAbs().maxCoeff());
  if ((sqrt_sigma - sqrt_sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw Error(ErrorKind::NotPSD, "factor is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sqrt_sigma, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    std::ostringstream msg;
    msg << "smallest eigenvalue " << eig.eigenvalues().minCoeff();
    throw Error(ErrorKind::NotPSD, msg.str());
  }
  return project_pi(sqrt_sigma * standard_normal(n, k, rng));
}

}  // namespace gpsr
