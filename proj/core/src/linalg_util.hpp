#pragma once

#include <vector>

#include <Eigen/Cholesky>

#include "gpsr/grassmann.hpp"

namespace gpsr::detail {

/// Cholesky with one diagonal-shift retry of 1e-12 * trace / size. The second
/// failure throws SingularCovariance.
Eigen::LLT<Matrix> robust_cholesky(Matrix a);

struct DescendingEvd {
  Vector values;   // descending, clamped at 0
  Matrix vectors;  // matching columns
};

/// Symmetric eigendecomposition of `s`, sorted descending.
DescendingEvd descending_evd(const Matrix& s);

/// Columns [blocks[0]*k, ...) of `c` gathered block by block.
Matrix gather_block_columns(const Matrix& c, Index k, const std::vector<Index>& blocks);

/// Pi_{pq} = w(p, q) * gram_{blocks[p], blocks[q]} for k x k blocks.
Matrix block_weighted_gram(const Matrix& gram, Index k, const std::vector<Index>& blocks,
                           const Matrix& weights);

/// Orthonormal completion of an r x m orthonormal block to r x t columns.
Matrix complete_orthonormal(const Matrix& q, Index t);

}  // namespace gpsr::detail
