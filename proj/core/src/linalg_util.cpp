#include "linalg_util.hpp"

#include <algorithm>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "gpsr/error.hpp"

namespace gpsr::detail {

Eigen::LLT<Matrix> robust_cholesky(Matrix a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double shift = 1e-12 * a.trace() / static_cast<double>(a.rows());
  a.diagonal().array() += shift;
  llt.compute(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "Cholesky failed after diagonal shift");
  }
  return llt;
}

DescendingEvd descending_evd(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "symmetric eigensolver did not converge");
  }
  // Eigen returns ascending order.
  DescendingEvd out;
  out.values = eig.eigenvalues().reverse().cwiseMax(0.0);
  out.vectors = eig.eigenvectors().rowwise().reverse();
  return out;
}

Matrix gather_block_columns(const Matrix& c, Index k, const std::vector<Index>& blocks) {
  Matrix out(c.rows(), k * static_cast<Index>(blocks.size()));
  for (std::size_t p = 0; p < blocks.size(); ++p) {
    out.middleCols(static_cast<Index>(p) * k, k) = c.middleCols(blocks[p] * k, k);
  }
  return out;
}

Matrix block_weighted_gram(const Matrix& gram, Index k, const std::vector<Index>& blocks,
                           const Matrix& weights) {
  const auto m = static_cast<Index>(blocks.size());
  Matrix pi(m * k, m * k);
  for (Index q = 0; q < m; ++q) {
    for (Index p = 0; p < m; ++p) {
      pi.block(p * k, q * k, k, k) =
          weights(p, q) * gram.block(blocks[static_cast<std::size_t>(p)] * k,
                                     blocks[static_cast<std::size_t>(q)] * k, k, k);
    }
  }
  return pi;
}

Matrix complete_orthonormal(const Matrix& q, Index t) {
  const Index r = q.rows();
  if (q.cols() >= t) return q.leftCols(t);
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix full = qr.householderQ() * Matrix::Identity(r, r);
  Matrix out(r, t);
  out.leftCols(q.cols()) = q;
  out.rightCols(t - q.cols()) = full.middleCols(q.cols(), t - q.cols());
  return out;
}

}  // namespace gpsr::detail
