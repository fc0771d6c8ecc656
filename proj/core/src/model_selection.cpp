#include "gpsr/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/SVD>
#include <json.hpp>

#include "gpsr/error.hpp"
#include "gpsr/parallel.hpp"
#include "linalg_util.hpp"

namespace gpsr {

namespace {

// Quantities shared by the error, gradient and log-density of one fold.
struct Fold {
  Index i = 0;
  std::vector<Index> rest;
  Vector w;            // Kbar_ip / m over rest
  double m = 0.0;      // max_p |Kbar_ip|
  double kbar_ii = 0.0;
  Matrix k_rest_inv;   // inverse of K without row and column i
  Vector v;            // k_rest_inv * K[rest, i]
  Matrix delta;        // m^2 / Kbar_ii * (D_v K_rest D_v)^{-1}
  Eigen::LLT<Matrix> chol;
  Matrix c_rest;       // C~ without block i
  Matrix lt;           // L^{-1} c_rest^T
  detail::DescendingEvd evd;  // of lt^T lt
};

std::optional<Fold> make_fold(const GpsModel& model, Index i) {
  const Matrix& kbar = model.correlation_inverse();
  const Index l = model.l();
  const Index k = model.k();
  Fold f;
  f.i = i;
  for (Index p = 0; p < l; ++p) {
    if (p != i) f.rest.push_back(p);
  }
  const auto m = static_cast<Index>(f.rest.size());
  f.w.resize(m);
  for (Index p = 0; p < m; ++p) f.m = std::max(f.m, std::abs(kbar(i, f.rest[p])));
  if (!(f.m > 0.0) || !std::isfinite(f.m)) return std::nullopt;
  for (Index p = 0; p < m; ++p) {
    f.w(p) = kbar(i, f.rest[p]) / f.m;
    if (std::abs(f.w(p)) < kWeightThreshold) return std::nullopt;
  }
  f.kbar_ii = kbar(i, i);

  // The Schur complement of Kbar cancels badly when point i is well predicted
  // by the others, so the reduced inverse is formed directly.
  const Matrix& kfull = model.correlation();
  Matrix k_rest(m, m);
  Vector k_i(m);
  for (Index q = 0; q < m; ++q) {
    k_i(q) = kfull(f.rest[q], i);
    for (Index p = 0; p < m; ++p) k_rest(p, q) = kfull(f.rest[p], f.rest[q]);
  }
  const Eigen::LLT<Matrix> k_chol(k_rest);
  if (k_chol.info() != Eigen::Success) return std::nullopt;
  f.k_rest_inv = k_chol.solve(Matrix::Identity(m, m));
  f.v = f.k_rest_inv * k_i;
  if (!f.v.allFinite() || (f.v.array() == 0.0).any()) return std::nullopt;
  const double scale = f.m * f.m / f.kbar_ii;
  f.delta.resize(m, m);
  for (Index q = 0; q < m; ++q) {
    for (Index p = 0; p < m; ++p) f.delta(p, q) = scale * f.k_rest_inv(p, q) / (f.v(p) * f.v(q));
  }
  try {
    f.chol = detail::robust_cholesky(detail::block_weighted_gram(model.gram(), k, f.rest, f.delta));
  } catch (const Error&) {
    return std::nullopt;
  }
  f.c_rest = detail::gather_block_columns(model.coordinates(), k, f.rest);
  f.lt = f.chol.matrixL().solve(f.c_rest.transpose());
  const Matrix s = f.lt.transpose() * f.lt;
  f.evd = detail::descending_evd(0.5 * (s + s.transpose()));
  return f;
}

Matrix held_out_coordinates(const GpsModel& model, Index i) {
  return model.coordinates().middleCols(i * model.k(), model.k());
}

double squared_angle_sum(const Vector& sigma) {
  double total = 0.0;
  for (Index j = 0; j < sigma.size(); ++j) {
    const double phi = std::acos(std::clamp(sigma(j), 0.0, 1.0));
    total += phi * phi;
  }
  return total;
}

double fast_fold_error(const GpsModel& model, const Fold& f) {
  const Matrix a = held_out_coordinates(model, f.i).transpose() * f.evd.vectors.leftCols(model.k());
  Eigen::JacobiSVD<Matrix> svd(a);
  return squared_angle_sum(svd.singularValues());
}

double refit_fold_error(const GpsModel& model, Index i) {
  const GpsModel reduced = leave_one_out(model, i);
  const auto& x = model.bases()[static_cast<std::size_t>(i)];
  const StiefelBasis mean = predict(reduced, model.points()[static_cast<std::size_t>(i)]).mean();
  const double d = riemannian_distance(mean, x);
  return d * d;
}

double fold_error(const GpsModel& model, Index i) {
  if (auto f = make_fold(model, i)) return fast_fold_error(model, *f);
  return refit_fold_error(model, i);
}

// phi / sin(phi) with phi = acos(sigma); tends to 1 as sigma -> 1.
double angle_factor(double sigma) {
  const double phi = std::acos(std::clamp(sigma, 0.0, 1.0));
  if (phi < 1e-4) return 1.0 + phi * phi / 6.0;
  return phi / std::sin(phi);
}

Vector fast_fold_gradient(const GpsModel& model, const Fold& f, const std::vector<Matrix>& dks,
                          Index tau, GradientMode mode) {
  const Index k = model.k();
  const Index r = model.rank();
  const Vector& lambda = f.evd.values;
  const Matrix& vecs = f.evd.vectors;
  if (k < r && lambda(k - 1) - lambda(k) < kSpectralGapTolerance * lambda(0)) {
    throw Error(ErrorKind::DegenerateSpectrum, "eigengap below tolerance");
  }
  if (!(lambda(k - 1) > 0.0)) throw Error(ErrorKind::DegenerateSpectrum, "zero leading eigenvalue");

  const Matrix ci = held_out_coordinates(model, f.i);
  Eigen::JacobiSVD<Matrix> svd(ci.transpose() * vecs.leftCols(k),
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sigma = svd.singularValues();
  Vector factor(k);
  for (Index j = 0; j < k; ++j) factor(j) = angle_factor(sigma(j));

  const Matrix mmat = f.chol.solve(f.c_rest.transpose());  // Pi^{-1} C^T
  const Matrix y = mmat * vecs.leftCols(k);
  const auto m = static_cast<Index>(f.rest.size());
  const Index tau_used = std::clamp<Index>(tau > 0 ? tau : 2 * k, k, r);
  const double scale = f.m * f.m / f.kbar_ii;

  Vector grad(static_cast<Index>(dks.size()));
  for (std::size_t h = 0; h < dks.size(); ++h) {
    const Matrix& dk = dks[h];
    Matrix dk_rest(m, m);
    Vector dk_i(m), k_i(m);
    for (Index q = 0; q < m; ++q) {
      const Index rq = f.rest[static_cast<std::size_t>(q)];
      dk_i(q) = dk(rq, f.i);
      k_i(q) = model.correlation()(rq, f.i);
      for (Index p = 0; p < m; ++p) dk_rest(p, q) = dk(f.rest[static_cast<std::size_t>(p)], rq);
    }
    const Matrix dinv = -(f.k_rest_inv * dk_rest * f.k_rest_inv);
    const Vector dv = dinv * k_i + f.k_rest_inv * dk_i;
    // The scale m^2 / Kbar_ii is held fixed; it only rescales S.
    Matrix ddelta(m, m);
    for (Index q = 0; q < m; ++q) {
      for (Index p = 0; p < m; ++p) {
        ddelta(p, q) = scale * dinv(p, q) / (f.v(p) * f.v(q)) -
                       f.delta(p, q) * (dv(p) / f.v(p) + dv(q) / f.v(q));
      }
    }
    const Matrix dpi = detail::block_weighted_gram(model.gram(), k, f.rest, ddelta);
    const Matrix g = -(mmat.transpose() * (dpi * y));  // column p: dS v_p

    // Directions inside the top-k block only rotate V[:, :k] and leave the
    // singular values unchanged, so those terms are skipped.
    Matrix dvecs = Matrix::Zero(r, k);
    for (Index p = 0; p < k; ++p) {
      const Vector gp = g.col(p);
      if (mode == GradientMode::Exact) {
        const Vector u = vecs.transpose() * gp;
        for (Index q = k; q < r; ++q) dvecs.col(p) += vecs.col(q) * (u(q) / (lambda(p) - lambda(q)));
      } else {
        const auto vt = vecs.leftCols(tau_used);
        const Vector u = vt.transpose() * gp;
        for (Index q = k; q < tau_used; ++q) {
          dvecs.col(p) += vecs.col(q) * (u(q) / (lambda(p) - lambda(q)));
        }
        dvecs.col(p) += (gp - vt * u) / lambda(p);
      }
    }
    const Matrix da = ci.transpose() * dvecs;
    double total = 0.0;
    for (Index j = 0; j < k; ++j) {
      total += factor(j) * svd.matrixU().col(j).dot(da * svd.matrixV().col(j));
    }
    grad(static_cast<Index>(h)) = -2.0 * total;
  }
  return grad;
}

Vector finite_difference_fold_gradient(const GpsModel& model, Index i) {
  const Vector beta = model.kernel().lengthscales;
  Vector grad(beta.size());
  for (Index h = 0; h < beta.size(); ++h) {
    const double step = 1e-4 * beta(h);
    Vector up = beta, down = beta;
    up(h) += step;
    down(h) -= step;
    const double fu = fold_error(model.with_kernel(model.kernel().with_lengthscales(up)), i);
    const double fd = fold_error(model.with_kernel(model.kernel().with_lengthscales(down)), i);
    grad(h) = (fu - fd) / (2.0 * step);
  }
  return grad;
}

GpsModel at_beta(const GpsModel& model, const Vector& beta) {
  if (model.l() < 3) {
    throw Error(ErrorKind::EmptySample, "leave-one-out needs at least three training points");
  }
  return model.with_kernel(model.kernel().with_lengthscales(beta));
}

LoocvReport evaluate(const GpsModel& base, const Vector& beta, bool with_gradient, Index tau,
                     GradientMode mode) {
  const GpsModel model = at_beta(base, beta);
  const Index l = model.l();
  const Index h = model.kernel().hyperparameter_count();

  std::vector<Matrix> dks;
  if (with_gradient) dks = corr_matrix_grad(model.kernel(), model.points());

  std::vector<double> errors(static_cast<std::size_t>(l));
  std::vector<Vector> grads(static_cast<std::size_t>(l), Vector::Zero(h));
  std::vector<char> refit(static_cast<std::size_t>(l), 0);
  parallel_for(static_cast<std::size_t>(l), [&](std::size_t idx) {
    const auto i = static_cast<Index>(idx);
    const auto f = make_fold(model, i);
    if (!f) {
      refit[idx] = 1;
      errors[idx] = refit_fold_error(model, i);
      if (with_gradient) grads[idx] = finite_difference_fold_gradient(model, i);
      return;
    }
    errors[idx] = fast_fold_error(model, *f);
    if (!with_gradient) return;
    try {
      grads[idx] = fast_fold_gradient(model, *f, dks, tau, mode);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateSpectrum) throw;
      grads[idx] = finite_difference_fold_gradient(model, i);
    }
  });

  LoocvReport report;
  report.beta = beta;
  report.per_point = Eigen::Map<const Vector>(errors.data(), l);
  report.total_error = std::accumulate(errors.begin(), errors.end(), 0.0);
  for (Index i = 0; i < l; ++i) {
    if (refit[static_cast<std::size_t>(i)]) report.refit_folds.push_back(i);
  }
  if (with_gradient) {
    Vector total = Vector::Zero(h);
    for (const auto& g : grads) total += g;
    report.gradient = total;
  }
  return report;
}

// -1/2 (k log|Sigma| + n log|X^T Sigma^{-1} X|) for
// Sigma = eps2 I + D diag(lambda) D^T, D n x t orthonormal, coords = D^T X.
double log_macg_density(Index n, const Matrix& xtx, const Matrix& coords, const Vector& lambda,
                        double eps2) {
  if (!(eps2 > 0.0)) throw Error(ErrorKind::SingularCovariance, "zero noise variance");
  const Index k = xtx.rows();
  const Index t = lambda.size();
  const Vector shifted = lambda.array() + eps2;
  const double log_det_sigma =
      shifted.array().log().sum() + static_cast<double>(n - t) * std::log(eps2);
  Matrix inner = (xtx - coords.transpose() * coords) / eps2 +
                 coords.transpose() * shifted.cwiseInverse().asDiagonal() * coords;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::LLT<Matrix> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "X^T Sigma^{-1} X is not positive definite");
  }
  const double log_det_inner = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(k) * log_det_sigma + static_cast<double>(n) * log_det_inner);
}

}  // namespace

Vector rule_of_thumb(Index d, Index l, const Vector& ranges) {
  if (d < 1 || l < 1) throw Error(ErrorKind::InvalidArgument, "rule of thumb needs d, l >= 1");
  if (ranges.size() != d) throw Error(ErrorKind::DimensionMismatch, "one range per dimension");
  if (!(ranges.array() > 0.0).all()) throw Error(ErrorKind::InvalidArgument, "ranges must be positive");
  return 3.0 * std::pow(static_cast<double>(d), 1.5) / static_cast<double>(l) * ranges;
}

Vector parameter_ranges(const PointSet& points) {
  if (points.empty()) throw Error(ErrorKind::EmptySample, "no parameter points");
  Vector lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vector range = hi - lo;
  for (Index i = 0; i < range.size(); ++i) {
    if (!(range(i) > 0.0)) range(i) = 1.0;
  }
  return range;
}

TuneBounds default_bounds(const GpsModel& model) {
  Vector rule = rule_of_thumb(model.d(), model.l(), parameter_ranges(model.points()));
  if (model.kernel().shared()) rule = Vector::Constant(1, rule.mean());
  return TuneBounds{0.7 * rule, 1.3 * rule};
}

LoocvReport loocv_error(const GpsModel& model, const Vector& beta) {
  return evaluate(model, beta, false, 0, GradientMode::Approximate);
}

Vector loocv_gradient(const GpsModel& model, const Vector& beta, Index tau, GradientMode mode) {
  return *evaluate(model, beta, true, tau, mode).gradient;
}

LoocvReport loocv_error_and_gradient(const GpsModel& model, const Vector& beta, Index tau,
                                     GradientMode mode) {
  return evaluate(model, beta, true, tau, mode);
}

TuneResult tune(const GpsModel& model, const TuneBounds& bounds, const Vector& init,
                int max_iters) {
  const Index h = model.kernel().hyperparameter_count();
  if (bounds.lower.size() != h || bounds.upper.size() != h || init.size() != h) {
    throw Error(ErrorKind::DimensionMismatch, "bounds and init need one entry per length-scale");
  }
  if (!(bounds.lower.array() > 0.0).all() || !(bounds.upper.array() >= bounds.lower.array()).all()) {
    throw Error(ErrorKind::InvalidArgument, "bounds must be positive and ordered");
  }
  if ((init.array() < bounds.lower.array()).any() || (init.array() > bounds.upper.array()).any()) {
    throw Error(ErrorKind::InvalidArgument, "init lies outside the bounds");
  }

  TuneResult result;
  const Vector log_lo = bounds.lower.array().log();
  const Vector log_hi = bounds.upper.array().log();
  auto evaluate_at = [&](const Vector& x) {
    const Vector beta = x.array().exp();
    const double e = loocv_error(model, beta).total_error;
    result.trace.push_back({beta, e});
    return e;
  };

  const Vector x0 = init.array().log();
  double best = evaluate_at(x0);
  result.beta_star = init;
  result.error = best;

  if (h == 1) {
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = log_lo(0), b = log_hi(0);
    evaluate_at(Vector::Constant(1, a));
    evaluate_at(Vector::Constant(1, b));
    double c = b - ratio * (b - a), d = a + ratio * (b - a);
    double fc = evaluate_at(Vector::Constant(1, c));
    double fd = evaluate_at(Vector::Constant(1, d));
    int iter = 0;
    while (b - a > kTuneTolerance && iter++ < max_iters) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - ratio * (b - a);
        fc = evaluate_at(Vector::Constant(1, c));
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + ratio * (b - a);
        fd = evaluate_at(Vector::Constant(1, d));
      }
    }
    result.converged = b - a <= kTuneTolerance;
  } else {
    Vector x = x0;
    double fx = best;
    double step = 0.5;
    for (int iter = 0; iter < max_iters; ++iter) {
      const Vector beta = x.array().exp();
      Vector g = beta.cwiseProduct(loocv_gradient(model, beta, 0, GradientMode::Exact));
      for (Index j = 0; j < h; ++j) {
        if ((x(j) <= log_lo(j) && g(j) > 0.0) || (x(j) >= log_hi(j) && g(j) < 0.0)) g(j) = 0.0;
      }
      const double gmax = g.cwiseAbs().maxCoeff();
      if (!(gmax > 0.0)) {
        result.converged = true;
        break;
      }
      const Vector dir = -g / gmax;
      bool accepted = false;
      while (step >= kTuneTolerance) {
        const Vector xn = (x + step * dir).cwiseMax(log_lo).cwiseMin(log_hi);
        if ((xn - x).cwiseAbs().maxCoeff() < kTuneTolerance) break;
        const double fn = evaluate_at(xn);
        if (fn < fx) {
          x = xn;
          fx = fn;
          step = std::min(2.0 * step, 1.0);
          accepted = true;
          break;
        }
        step /= 2.0;
      }
      if (!accepted) {
        result.converged = true;
        break;
      }
    }
  }

  for (const auto& e : result.trace) {
    if (e.error < result.error) {
      result.error = e.error;
      result.beta_star = e.beta;
    }
  }
  return result;
}

TuneResult tune(const GpsModel& model) {
  const TuneBounds bounds = default_bounds(model);
  return tune(model, bounds, 0.5 * (bounds.lower + bounds.upper));
}

double log_modified_marginal_likelihood(const GpsModel& base, const Vector& beta) {
  const GpsModel model = base.with_kernel(base.kernel().with_lengthscales(beta));
  const Index n = model.n();
  const Index k = model.k();
  const Index l = model.l();
  Eigen::LLT<Matrix> kchol(model.correlation());
  if (kchol.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCorrelation, "correlation matrix is not positive definite");
  }
  const double log_det_k = 2.0 * kchol.matrixLLT().diagonal().array().log().sum();
  std::vector<Index> all(static_cast<std::size_t>(l));
  std::iota(all.begin(), all.end(), Index{0});
  const Matrix breve = detail::block_weighted_gram(model.gram(), k, all, model.correlation_inverse());
  Eigen::LLT<Matrix> bchol(breve);
  if (bchol.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularCovariance, "weighted Gram matrix is not positive definite");
  }
  const double log_det_b = 2.0 * bchol.matrixLLT().diagonal().array().log().sum();
  const double two_pi = 2.0 * std::numbers::pi;
  return -0.5 * static_cast<double>((n - k) * k * l) * std::log(two_pi) -
         0.5 * static_cast<double>(k) * (static_cast<double>(n) * log_det_k + log_det_b);
}

double loocv_log_density(const GpsModel& base, const Vector& beta) {
  const GpsModel model = at_beta(base, beta);
  const Index n = model.n();
  const Index k = model.k();
  const Index l = model.l();
  std::vector<double> terms(static_cast<std::size_t>(l));
  parallel_for(static_cast<std::size_t>(l), [&](std::size_t idx) {
    const auto i = static_cast<Index>(idx);
    if (const auto f = make_fold(model, i)) {
      const double eps2 = 1.0 / f->kbar_ii - model.kernel().jitter;
      const Vector lambda = f->evd.values * (f->m * f->m / f->kbar_ii);
      const Matrix ci = held_out_coordinates(model, i);
      const Matrix coords = f->evd.vectors.transpose() * ci;
      terms[idx] = log_macg_density(n, Matrix::Identity(k, k), coords, lambda, eps2);
      return;
    }
    const GpsModel reduced = leave_one_out(model, i);
    const PredictiveSubspace pred =
        predict(reduced, model.points()[idx], reduced.rank());
    const Matrix& x = model.bases()[idx].matrix();
    const Matrix coords = pred.principal_directions().transpose() * x;
    terms[idx] = log_macg_density(n, x.transpose() * x, coords, pred.principal_variances,
                                  pred.noise_variance);
  });
  return std::accumulate(terms.begin(), terms.end(), 0.0);
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string to_json(const LoocvReport& report) {
  nlohmann::json j;
  j["total_error"] = report.total_error;
  j["per_point"] = to_std(report.per_point);
  j["beta"] = to_std(report.beta);
  if (report.gradient) j["gradient"] = to_std(*report.gradient);
  j["refit_folds"] = report.refit_folds;
  return j.dump(2);
}

std::string to_json(const TuneResult& result) {
  nlohmann::json j;
  j["beta_star"] = to_std(result.beta_star);
  j["error"] = result.error;
  j["converged"] = result.converged;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : result.trace) {
    trace.push_back({{"beta", to_std(e.beta)}, {"error", e.error}});
  }
  j["trace"] = trace;
  return j.dump(2);
}

}  // namespace gpsr
