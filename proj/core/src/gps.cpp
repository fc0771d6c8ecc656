#include "gpsr/gps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "gpsr/error.hpp"
#include "linalg_util.hpp"

namespace gpsr {

struct GpsModel::Data {
  PointSet points;
  std::vector<StiefelBasis> bases;
  Matrix gram;
  std::shared_ptr<const Matrix> global_basis;
  Matrix triangular;
  std::vector<Index> pivot;
  Index rank = 0;
  Matrix coordinates;
  Index n = 0;
  Index k = 0;
  bool coincident = false;
};

struct GpsModel::Correlation {
  Matrix k;
  Eigen::LLT<Matrix> llt;
  Matrix inverse;
};

namespace {

void validate_sample(const PointSet& points, const std::vector<StiefelBasis>& bases,
                     const KernelSpec& kernel) {
  if (points.empty() || bases.empty()) throw Error(ErrorKind::EmptySample, "no training data");
  if (points.size() != bases.size()) {
    std::ostringstream msg;
    msg << points.size() << " parameter points but " << bases.size() << " bases";
    throw Error(ErrorKind::ShapeMismatch, msg.str());
  }
  const Index n = bases.front().n();
  const Index k = bases.front().k();
  for (const auto& b : bases) {
    if (b.n() != n || b.k() != k) {
      std::ostringstream msg;
      msg << "bases must share one shape; got " << n << "x" << k << " and " << b.n() << "x"
          << b.k();
      throw Error(ErrorKind::ShapeMismatch, msg.str());
    }
  }
  const Index d = points.front().size();
  if (d < 1) throw Error(ErrorKind::DimensionMismatch, "parameter points are empty");
  for (const auto& p : points) {
    if (p.size() != d) throw Error(ErrorKind::DimensionMismatch, "parameter points differ in size");
    if (!p.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite parameter point");
  }
  kernel.validate(d);
}

Matrix stack_bases(const std::vector<StiefelBasis>& bases) {
  const Index n = bases.front().n();
  const Index k = bases.front().k();
  Matrix x(n, k * static_cast<Index>(bases.size()));
  for (std::size_t i = 0; i < bases.size(); ++i) {
    x.middleCols(static_cast<Index>(i) * k, k) = bases[i].matrix();
  }
  return x;
}

bool any_coincident(const PointSet& points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i] == points[j]) return true;
    }
  }
  return false;
}

Matrix coordinates_from(const Matrix& triangular, const std::vector<Index>& pivot) {
  Matrix c(triangular.rows(), triangular.cols());
  for (Index j = 0; j < triangular.cols(); ++j) {
    c.col(pivot[static_cast<std::size_t>(j)]) = triangular.col(j);
  }
  return c;
}

}  // namespace

GpsModel::GpsModel(std::shared_ptr<const Data> data, KernelSpec kernel)
    : data_(std::move(data)), kernel_(std::move(kernel)) {
  auto corr = std::make_shared<Correlation>();
  corr->k = corr_matrix(kernel_, data_->points);
  corr->llt.compute(corr->k);
  if (corr->llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCorrelation, "correlation matrix is not positive definite");
  }
  corr->inverse = corr->llt.solve(Matrix::Identity(corr->k.rows(), corr->k.cols()));
  corr->inverse = 0.5 * (corr->inverse + corr->inverse.transpose());
  corr_ = std::move(corr);
}

GpsModel::GpsModel(PointSet points, std::vector<StiefelBasis> bases, KernelSpec kernel,
                   GpsFactors factors) {
  validate_sample(points, bases, kernel);
  const Index n = bases.front().n();
  const Index k = bases.front().k();
  const Index kl = k * static_cast<Index>(bases.size());
  const Index r = factors.rank;
  if (r < k || r > std::min(n, kl)) {
    std::ostringstream msg;
    msg << "rank " << r << " outside [" << k << ", " << std::min(n, kl) << "]";
    throw Error(ErrorKind::InvalidArgument, msg.str());
  }
  if (factors.gram.rows() != kl || factors.gram.cols() != kl ||
      factors.global_basis.rows() != n || factors.global_basis.cols() != r ||
      factors.triangular.rows() != r || factors.triangular.cols() != kl ||
      static_cast<Index>(factors.pivot.size()) != kl) {
    throw Error(ErrorKind::ShapeMismatch, "model factors do not match the bases");
  }
  std::vector<Index> seen = factors.pivot;
  std::sort(seen.begin(), seen.end());
  for (Index j = 0; j < kl; ++j) {
    if (seen[static_cast<std::size_t>(j)] != j) {
      throw Error(ErrorKind::InvalidArgument, "pivot is not a permutation");
    }
  }
  const Matrix x = stack_bases(bases);
  if (StiefelBasis::orthonormality_defect(factors.global_basis) > kOrthonormalTolerance) {
    throw Error(ErrorKind::InvalidArgument, "global basis is not orthonormal");
  }
  Matrix coords = coordinates_from(factors.triangular, factors.pivot);
  if ((x - factors.global_basis * coords).norm() > 1e-8 * x.norm()) {
    throw Error(ErrorKind::InvalidArgument, "factors do not reproduce the stacked bases");
  }
  if ((factors.gram - x.transpose() * x).cwiseAbs().maxCoeff() > kOrthonormalTolerance) {
    throw Error(ErrorKind::InvalidArgument, "Gram matrix does not match the bases");
  }

  auto data = std::make_shared<Data>();
  data->coincident = any_coincident(points);
  data->points = std::move(points);
  data->bases = std::move(bases);
  data->gram = std::move(factors.gram);
  data->global_basis = std::make_shared<const Matrix>(std::move(factors.global_basis));
  data->triangular = std::move(factors.triangular);
  data->pivot = std::move(factors.pivot);
  data->rank = r;
  data->coordinates = std::move(coords);
  data->n = n;
  data->k = k;
  *this = GpsModel(std::move(data), std::move(kernel));
}

const PointSet& GpsModel::points() const { return data_->points; }
const std::vector<StiefelBasis>& GpsModel::bases() const { return data_->bases; }
Index GpsModel::n() const { return data_->n; }
Index GpsModel::k() const { return data_->k; }
Index GpsModel::l() const { return static_cast<Index>(data_->points.size()); }
Index GpsModel::d() const { return data_->points.front().size(); }
Index GpsModel::rank() const { return data_->rank; }
const Matrix& GpsModel::gram() const { return data_->gram; }
const Matrix& GpsModel::global_basis() const { return *data_->global_basis; }
const std::shared_ptr<const Matrix>& GpsModel::shared_global_basis() const {
  return data_->global_basis;
}
const Matrix& GpsModel::triangular() const { return data_->triangular; }
const std::vector<Index>& GpsModel::pivot() const { return data_->pivot; }
const Matrix& GpsModel::coordinates() const { return data_->coordinates; }
bool GpsModel::has_coincident_points() const { return data_->coincident; }
const Matrix& GpsModel::correlation() const { return corr_->k; }
const Matrix& GpsModel::correlation_inverse() const { return corr_->inverse; }
Vector GpsModel::solve_correlation(const Vector& rhs) const { return corr_->llt.solve(rhs); }

GpsModel GpsModel::with_kernel(KernelSpec kernel) const {
  kernel.validate(d());
  return GpsModel(data_, std::move(kernel));
}

GpsModel fit(PointSet points, std::vector<StiefelBasis> bases, KernelSpec kernel) {
  validate_sample(points, bases, kernel);
  const Index n = bases.front().n();
  const Index k = bases.front().k();
  const Matrix x = stack_bases(bases);
  const Index kl = x.cols();

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  const auto& packed = qr.matrixQR();
  const double lead = std::abs(packed(0, 0));
  Index r = 0;
  const Index max_rank = std::min(n, kl);
  while (r < max_rank && std::abs(packed(r, r)) >= kRankThreshold * lead) ++r;
  if (r < k) throw Error(ErrorKind::RankDeficient, "stacked bases have rank below k");

  Matrix v = Matrix::Identity(n, r);
  v.applyOnTheLeft(qr.householderQ());
  Matrix tri = packed.topRows(r);
  tri.triangularView<Eigen::StrictlyLower>().setZero();

  // The image of 0..kl-1 under the column permutation gives the pivot order.
  const Eigen::RowVectorXd ids = Eigen::RowVectorXd::LinSpaced(kl, 0.0, static_cast<double>(kl - 1));
  const Eigen::RowVectorXd permuted = ids * qr.colsPermutation();
  std::vector<Index> pivot(static_cast<std::size_t>(kl));
  for (Index j = 0; j < kl; ++j) pivot[static_cast<std::size_t>(j)] = std::llround(permuted(j));

  auto data = std::make_shared<GpsModel::Data>();
  data->coincident = any_coincident(points);
  data->points = std::move(points);
  data->bases = std::move(bases);
  Matrix gram = x.transpose() * x;
  data->gram = 0.5 * (gram + gram.transpose());
  data->global_basis = std::make_shared<const Matrix>(std::move(v));
  data->coordinates = coordinates_from(tri, pivot);
  data->triangular = std::move(tri);
  data->pivot = std::move(pivot);
  data->rank = r;
  data->n = n;
  data->k = k;
  return GpsModel(std::move(data), std::move(kernel));
}

GpsModel leave_one_out(const GpsModel& model, Index index) {
  if (index < 0 || index >= model.l()) throw Error(ErrorKind::InvalidArgument, "index out of range");
  if (model.l() < 2) throw Error(ErrorKind::EmptySample, "cannot leave out the only point");
  PointSet points;
  std::vector<StiefelBasis> bases;
  for (Index i = 0; i < model.l(); ++i) {
    if (i == index) continue;
    points.push_back(model.points()[static_cast<std::size_t>(i)]);
    bases.push_back(model.bases()[static_cast<std::size_t>(i)]);
  }
  return fit(std::move(points), std::move(bases), model.kernel());
}

StiefelBasis PredictiveSubspace::mean() const {
  if (exact_mean) return *exact_mean;
  return project_pi(*global_basis * local_directions.leftCols(subspace_dim));
}

Matrix PredictiveSubspace::principal_directions() const {
  return *global_basis * local_directions;
}

namespace {

void finish(PredictiveSubspace& out, const Matrix& s, double eps2, Index t) {
  const Matrix sym = 0.5 * (s + s.transpose());
  detail::DescendingEvd evd = detail::descending_evd(sym);
  out.local_directions = evd.vectors.leftCols(t);
  out.principal_variances = evd.values.head(t);
  out.noise_variance = std::clamp(eps2, 0.0, 1.0);
  out.prior_dominated = out.noise_variance > 1.0 - kPriorDominatedGap;
}

void set_prior(PredictiveSubspace& out, Index r, Index t) {
  out.local_directions = Matrix::Identity(r, t);
  out.principal_variances = Vector::Zero(t);
  out.noise_variance = 1.0;
  out.prior_dominated = true;
}

void set_exact(PredictiveSubspace& out, const GpsModel& model, Index i, Index t) {
  const Index k = model.k();
  const Index l = model.l();
  std::vector<Index> all(static_cast<std::size_t>(l));
  std::iota(all.begin(), all.end(), Index{0});
  // Sigma -> X_i [Pi'^{-1}]_ii X_i^T as v -> e_i, with Pi'_pq = Kbar_pq X_p^T X_q.
  const Matrix pi = detail::block_weighted_gram(model.gram(), k, all, model.correlation_inverse());
  const auto llt = detail::robust_cholesky(pi);
  Matrix e = Matrix::Zero(k * l, k);
  e.middleRows(i * k, k).setIdentity();
  const Matrix y = llt.solve(e);
  const Matrix c = 0.5 * (y.middleRows(i * k, k) + y.middleRows(i * k, k).transpose());
  const detail::DescendingEvd evd = detail::descending_evd(c);
  const Matrix dirs = project_pi(model.coordinates().middleCols(i * k, k) * evd.vectors).matrix();
  out.local_directions = detail::complete_orthonormal(dirs, t);
  out.principal_variances = Vector::Zero(t);
  out.principal_variances.head(k) = evd.values;
  out.noise_variance = 0.0;
  out.prior_dominated = false;
  out.exact_mean = model.bases()[static_cast<std::size_t>(i)];
}

// S over the training points in `active` only, unpivoted.
Matrix reduced_s(const GpsModel& model, const std::vector<Index>& active, const Vector& kvec,
                 double& eps2) {
  const Index k = model.k();
  const auto m = static_cast<Index>(active.size());
  Matrix kk(m, m);
  Vector ks(m);
  for (Index p = 0; p < m; ++p) {
    ks(p) = kvec(active[static_cast<std::size_t>(p)]);
    for (Index q = 0; q < m; ++q) {
      kk(p, q) = model.correlation()(active[static_cast<std::size_t>(p)],
                                     active[static_cast<std::size_t>(q)]);
    }
  }
  Eigen::LLT<Matrix> llt(kk);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCorrelation, "reduced correlation matrix is singular");
  }
  const Vector v = llt.solve(ks);
  eps2 = 1.0 - ks.dot(v);
  const double vmax = v.cwiseAbs().maxCoeff();
  if (!(vmax > 0.0) || (v.cwiseAbs().array() < kWeightThreshold * vmax).any()) {
    throw Error(ErrorKind::DegenerateWeights, "kernel weights vanish after excluding points");
  }
  const Vector vh = v / vmax;
  const Matrix kbar = llt.solve(Matrix::Identity(m, m));
  Matrix w(m, m);
  for (Index q = 0; q < m; ++q) {
    for (Index p = 0; p < m; ++p) w(p, q) = kbar(p, q) / (vh(p) * vh(q));
  }
  const Matrix pi = detail::block_weighted_gram(model.gram(), k, active, w);
  const auto chol = detail::robust_cholesky(pi);
  const Matrix c = detail::gather_block_columns(model.coordinates(), k, active);
  const Matrix lt = chol.matrixL().solve(c.transpose());
  return (vmax * vmax) * (lt.transpose() * lt);
}

}  // namespace

PredictiveSubspace predict(const GpsModel& model, const ParameterPoint& target, Index t) {
  const Index k = model.k();
  const Index l = model.l();
  const Index r = model.rank();
  if (target.size() != model.d()) {
    std::ostringstream msg;
    msg << "target has dimension " << target.size() << ", model expects " << model.d();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  if (t < k || t > r) {
    std::ostringstream msg;
    msg << "truncation " << t << " outside [" << k << ", " << r << "]";
    throw Error(ErrorKind::TruncationOutOfRange, msg.str());
  }

  PredictiveSubspace out;
  out.global_basis = model.shared_global_basis();
  out.subspace_dim = k;

  for (Index i = 0; i < l; ++i) {
    if (scaled_distance(model.kernel(), target, model.points()[static_cast<std::size_t>(i)]) <
        kExactMatchDistance) {
      set_exact(out, model, i, t);
      return out;
    }
  }

  const Vector kvec = corr_vector(model.kernel(), model.points(), target);
  const Vector v = model.solve_correlation(kvec);
  double eps2 = 1.0 - kvec.dot(v);
  const double vmax = v.cwiseAbs().maxCoeff();
  if (!(vmax > 0.0) || !std::isfinite(vmax)) {
    // Every correlation underflowed: the prediction is the prior.
    set_prior(out, r, t);
    return out;
  }

  std::vector<Index> active;
  for (Index i = 0; i < l; ++i) {
    if (std::abs(v(i)) >= kWeightThreshold * vmax) {
      active.push_back(i);
    } else {
      out.excluded_points.push_back(i);
    }
  }

  if (!out.excluded_points.empty()) {
    finish(out, reduced_s(model, active, kvec, eps2), eps2, t);
    return out;
  }

  const Vector vh = v / vmax;
  const Matrix& kbar = model.correlation_inverse();
  const Matrix& gram = model.gram();
  const auto& perm = model.pivot();
  const Index kl = k * l;
  Matrix pi(kl, kl);
  for (Index b = 0; b < kl; ++b) {
    const Index pb = perm[static_cast<std::size_t>(b)];
    const Index bb = pb / k;
    for (Index a = 0; a < kl; ++a) {
      const Index pa = perm[static_cast<std::size_t>(a)];
      const Index ba = pa / k;
      pi(a, b) = kbar(ba, bb) / (vh(ba) * vh(bb)) * gram(pa, pb);
    }
  }
  const auto chol = detail::robust_cholesky(std::move(pi));
  const Matrix lt = chol.matrixL().solve(model.triangular().transpose());
  finish(out, (vmax * vmax) * (lt.transpose() * lt), eps2, t);
  return out;
}

Matrix predictive_covariance_dense(const GpsModel& model, const ParameterPoint& target) {
  const Index n = model.n();
  const Index k = model.k();
  const Index l = model.l();
  if (n > kDenseOracleMaxN || n * l > 4000) {
    throw Error(ErrorKind::InvalidArgument, "problem too large for the dense covariance");
  }
  if (target.size() != model.d()) throw Error(ErrorKind::DimensionMismatch, "target dimension");
  const Vector kvec = corr_vector(model.kernel(), model.points(), target);
  const Matrix& kmat = model.correlation();
  const Vector v = kmat.partialPivLu().solve(kvec);
  const double vmax = v.cwiseAbs().maxCoeff();
  if (!(vmax > 0.0) || (v.cwiseAbs().array() < kWeightThreshold * vmax).any()) {
    throw Error(ErrorKind::DegenerateWeights, "vanishing kernel weights");
  }
  const double eps2 = std::clamp(1.0 - kvec.dot(v), 0.0, 1.0);
  const Matrix ktilde = (v.asDiagonal() * kmat * v.asDiagonal()).fullPivLu().inverse();

  Matrix kron = Matrix::Zero(n * l, n * l);
  for (Index q = 0; q < l; ++q) {
    for (Index p = 0; p < l; ++p) {
      kron.block(p * n, q * n, n, n).diagonal().setConstant(ktilde(p, q));
    }
  }
  Matrix blocks = Matrix::Zero(n * l, k * l);
  Matrix x(n, k * l);
  for (Index i = 0; i < l; ++i) {
    const Matrix& xi = model.bases()[static_cast<std::size_t>(i)].matrix();
    blocks.block(i * n, i * k, n, k) = xi;
    x.middleCols(i * k, k) = xi;
  }
  const Matrix middle = blocks.transpose() * kron * blocks;
  Matrix sigma = x * middle.fullPivLu().solve(x.transpose());
  sigma.diagonal().array() += eps2;
  return 0.5 * (sigma + sigma.transpose());
}

StiefelBasis sample_predictive(const PredictiveSubspace& prediction, Rng& rng) {
  const Matrix d = prediction.principal_directions();
  const Index k = prediction.subspace_dim;
  const double eps2 = prediction.noise_variance;
  const double eps = std::sqrt(eps2);
  const Vector scale =
      (prediction.principal_variances.array() + eps2).sqrt() - eps;
  const Matrix z = standard_normal(d.rows(), k, rng);
  const Matrix m = d * (scale.asDiagonal() * (d.transpose() * z)) + eps * z;
  return project_pi(m);
}

std::vector<StiefelBasis> sample_path(const PointSet& grid, const KernelSpec& kernel, Index n,
                                      Index k, Rng& rng) {
  if (grid.empty()) throw Error(ErrorKind::EmptySample, "empty grid");
  kernel.validate(grid.front().size());
  std::vector<StiefelBasis> draws;
  draws.reserve(grid.size());
  draws.push_back(sample_uniform(n, k, rng));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    PointSet previous(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(i));
    const GpsModel model = fit(std::move(previous), draws, kernel);
    const PredictiveSubspace pred = predict(model, grid[i], model.rank());
    draws.push_back(sample_predictive(pred, rng));
  }
  return draws;
}

Matrix reduced_operator(const PredictiveSubspace& prediction, const Matrix& a_r) {
  const Index r = prediction.rank();
  if (a_r.rows() != r || a_r.cols() != r) {
    std::ostringstream msg;
    msg << "reduced operator must be " << r << "x" << r << ", got " << a_r.rows() << "x"
        << a_r.cols();
    throw Error(ErrorKind::ShapeMismatch, msg.str());
  }
  const auto vk = prediction.local_directions.leftCols(prediction.subspace_dim);
  return vk.transpose() * a_r * vk;
}

}  // namespace gpsr
