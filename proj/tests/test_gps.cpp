#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpsr/error.hpp"
#include "gpsr/gps.hpp"
#include "oracles.hpp"

using namespace gpsr;
using fixture::vec;

namespace {

GpsModel fit_instance(const fixture::Instance& inst, double beta) {
  return fit(inst.points, inst.bases, fixture::se(beta));
}

Matrix dense_from_factors(const PredictiveSubspace& pred) {
  const Matrix d = pred.principal_directions();
  Matrix s = d * pred.principal_variances.asDiagonal() * d.transpose();
  s.diagonal().array() += pred.noise_variance;
  return s;
}

}  // namespace

TEST_SUITE("gps") {

TEST_CASE("fit with a single sample") {
  Rng rng(1);
  const StiefelBasis x = sample_uniform(6, 2, rng);
  const GpsModel m = fit({vec({0.0})}, {x}, fixture::se(1.0));
  CHECK(m.rank() == 2);
  CHECK((m.gram() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fit with a duplicated span has rank k") {
  Rng rng(2);
  const StiefelBasis x = sample_uniform(9, 3, rng);
  const StiefelBasis xq(x.matrix() * oracle::random_orthogonal(3, rng));
  const GpsModel m = fit({vec({0.0}), vec({1.0})}, {x, xq}, fixture::se(1.0));
  CHECK(m.rank() == 3);
}

TEST_CASE("fit factors satisfy their invariants") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const fixture::Instance inst = fixture::random_instance(20, 3, 4, 2, seed);
    const GpsModel m = fit_instance(inst, 1.0);
    const Matrix x = oracle::stack(inst.bases);
    CHECK(m.rank() == oracle::numerical_rank(x));
    CHECK(m.rank() == 12);
    const Matrix& v = m.global_basis();
    CHECK((v.transpose() * v - Matrix::Identity(m.rank(), m.rank())).cwiseAbs().maxCoeff() < 1e-10);
    Matrix vr = v * m.triangular();
    Matrix permuted(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) permuted.col(m.pivot()[static_cast<std::size_t>(j)]) = vr.col(j);
    CHECK((permuted - x).norm() <= 1e-8 * x.norm());
    CHECK((m.gram() - m.gram().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m.gram() - x.transpose() * x).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m.gram(), Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
    for (Index i = 0; i < 4; ++i) {
      CHECK((m.gram().block(3 * i, 3 * i, 3, 3) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("fit rejects inconsistent input") {
  Rng rng(3);
  CHECK_THROWS_AS(fit({}, {}, fixture::se(1.0)), Error);
  try {
    fit({vec({0.0}), vec({1.0})}, {sample_uniform(5, 2, rng), sample_uniform(6, 2, rng)}, fixture::se(1.0));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("coincident points are flagged") {
  Rng rng(4);
  const GpsModel m = fit({vec({0.5}), vec({0.5}), vec({1.0})},
                         {sample_uniform(5, 1, rng), sample_uniform(5, 1, rng), sample_uniform(5, 1, rng)},
                         fixture::se(1.0, 1e-8));
  CHECK(m.has_coincident_points());
}

TEST_CASE("prediction at a training point returns that subspace") {
  const fixture::Instance inst = fixture::random_instance(12, 2, 5, 1, 5);
  const GpsModel m = fit_instance(inst, 1.2);
  for (std::size_t i = 0; i < inst.points.size(); ++i) {
    const PredictiveSubspace p = predict(m, inst.points[i]);
    CHECK(p.noise_variance == 0.0);
    CHECK(riemannian_distance(p.mean(), inst.bases[i]) < 1e-10);
  }
}

TEST_CASE("far targets degenerate to the prior") {
  const fixture::Instance inst = fixture::random_instance(12, 2, 5, 1, 6);
  const double beta = 0.5;
  const GpsModel m = fit_instance(inst, beta);
  for (double far : {4.0 + 20.5 * beta, 4.0 + 40.0 * beta, 1e6}) {
    const PredictiveSubspace p = predict(m, vec({far}));
    CHECK(p.noise_variance > 1.0 - 1e-6);
    CHECK(p.prior_dominated);
  }
}

TEST_CASE("factored prediction matches the dense covariance") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const fixture::Instance inst = fixture::random_instance(30, 3, 5, 2, seed);
    const GpsModel m = fit_instance(inst, 1.5);
    const Vector target = vec({1.3, 2.2});
    const PredictiveSubspace p = predict(m, target, m.rank());
    const oracle::DenseCovariance dense = oracle::covariance(m, target);
    const oracle::TopEig eig = oracle::top_eig(dense.sigma, 3);
    CHECK(oracle::distance(eig.vectors, p.mean().matrix()) < 1e-8);
    for (Index j = 0; j < p.truncation(); ++j) {
      const double want = eig.values(j) - dense.eps2;
      CHECK(std::abs(p.principal_variances(j) - want) <= 1e-8 * std::abs(want));
    }
    CHECK(std::abs(p.noise_variance - dense.eps2) < 1e-10);
    CHECK((predictive_covariance_dense(m, target) - dense.sigma).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((dense_from_factors(p) - dense.sigma).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("dense covariance spectrum and trace identity") {
  const fixture::Instance inst = fixture::random_instance(15, 2, 6, 1, 9);
  const GpsModel m = fit_instance(inst, 0.9);
  for (double t : {0.37, 1.9, 3.3}) {
    const Matrix s = predictive_covariance_dense(m, vec({t}));
    const oracle::DenseCovariance dense = oracle::covariance(m, vec({t}));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= dense.eps2 - 1e-10);
    const double want = 15 * dense.eps2 + (dense.pi_inv * dense.gram).trace();
    CHECK(s.trace() == doctest::Approx(want).epsilon(1e-8));
    const PredictiveSubspace p = predict(m, vec({t}), m.rank());
    CHECK(p.principal_variances.sum() ==
          doctest::Approx((dense.pi_inv * dense.gram).trace()).epsilon(1e-8));
  }
}

TEST_CASE("predictive invariants along a ray") {
  const fixture::Instance inst = fixture::smooth_instance(10, 2, 6, 1, 10);
  const GpsModel m = fit_instance(inst, 0.3);
  double hi = 0.0;
  for (const auto& p : inst.points) hi = std::max(hi, p(0));
  double previous = 0.0;
  for (int step = 1; step <= 40; ++step) {
    const PredictiveSubspace p = predict(m, vec({hi + 0.05 * step}), m.rank());
    CHECK(p.noise_variance >= 0.0);
    CHECK(p.noise_variance <= 1.0);
    CHECK(p.noise_variance >= previous - 1e-12);
    previous = p.noise_variance;
    const Matrix& v = p.local_directions;
    CHECK((v.transpose() * v - Matrix::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(p.principal_variances.minCoeff() >= 0.0);
    for (Index j = 1; j < p.truncation(); ++j) {
      CHECK(p.principal_variances(j) <= p.principal_variances(j - 1));
    }
  }
}

TEST_CASE("representation invariance of predict") {
  Rng rng(11);
  const fixture::Instance inst = fixture::random_instance(14, 3, 5, 2, 12);
  fixture::Instance rotated = inst;
  for (auto& b : rotated.bases) b = StiefelBasis(b.matrix() * oracle::random_orthogonal(3, rng));
  const GpsModel a = fit_instance(inst, 1.1);
  const GpsModel b = fit_instance(rotated, 1.1);
  for (const Vector& target : {vec({0.4, 0.9}), vec({2.5, 3.1})}) {
    const PredictiveSubspace pa = predict(a, target);
    const PredictiveSubspace pb = predict(b, target);
    CHECK(riemannian_distance(pa.mean(), pb.mean()) < 1e-8);
    CHECK(std::abs(pa.noise_variance - pb.noise_variance) <= 1e-8 * pa.noise_variance);
    CHECK((pa.principal_variances - pb.principal_variances).cwiseAbs().maxCoeff() <=
          1e-8 * pa.principal_variances(0));
  }
}

TEST_CASE("truncation must lie between k and r") {
  const fixture::Instance inst = fixture::random_instance(10, 2, 3, 1, 13);
  const GpsModel m = fit_instance(inst, 1.0);
  for (Index t : {Index{1}, m.rank() + 1}) {
    try {
      predict(m, vec({0.5}), t);
      FAIL("expected TruncationOutOfRange");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TruncationOutOfRange);
    }
  }
  CHECK_THROWS_AS(predict(m, vec({0.5, 0.5})), Error);
}

TEST_CASE("sampling from a degenerate prediction stays on the mean") {
  const fixture::Instance inst = fixture::random_instance(8, 2, 4, 1, 14);
  const GpsModel m = fit_instance(inst, 1.0);
  const PredictiveSubspace p = predict(m, inst.points[2]);
  REQUIRE(p.noise_variance == 0.0);
  Rng rng(15);
  for (int s = 0; s < 20; ++s) CHECK(riemannian_distance(sample_predictive(p, rng), p.mean()) < 1e-8);
}

TEST_CASE("sampling with zero variances and unit noise is uniform") {
  Rng rng(16);
  const Index n = 8, k = 2;
  PredictiveSubspace p;
  p.global_basis = std::make_shared<const Matrix>(sample_uniform(n, 3, rng).matrix());
  p.local_directions = Matrix::Identity(3, 3);
  p.principal_variances = Vector::Zero(3);
  p.noise_variance = 1.0;
  p.subspace_dim = k;
  const int draws = 10000;
  Matrix mean = Matrix::Zero(n, n), sq = Matrix::Zero(n, n);
  for (int s = 0; s < draws; ++s) {
    const Matrix x = sample_predictive(p, rng).matrix();
    const Matrix proj = x * x.transpose();
    mean += proj;
    sq += proj.cwiseProduct(proj);
  }
  mean /= draws;
  const Matrix se = ((sq / draws - mean.cwiseProduct(mean)) / draws).cwiseSqrt();
  const Matrix target = (static_cast<double>(k) / n) * Matrix::Identity(n, n);
  CHECK(((mean - target).cwiseAbs().array() <= 5.0 * se.array()).all());
}

TEST_CASE("predictive sampler matches the dense square-root sampler") {
  const fixture::Instance inst = fixture::random_instance(10, 2, 4, 1, 17);
  const GpsModel m = fit_instance(inst, 1.0);
  const Vector target = vec({1.7});
  const PredictiveSubspace p = predict(m, target, m.rank());
  const Matrix root = oracle::sym_sqrt(oracle::covariance(m, target).sigma);
  Rng rng(18);
  const StiefelBasis ref = sample_uniform(10, 2, rng);
  std::vector<double> a, b;
  for (int s = 0; s < 2000; ++s) {
    a.push_back(riemannian_distance(sample_predictive(p, rng), ref));
    b.push_back(riemannian_distance(sample_macg(root, 2, rng), ref));
  }
  CHECK(oracle::ks_pvalue(a, b) > 0.01);
}

TEST_CASE("sample_path") {
  Rng rng(19);
  const auto single = sample_path({vec({0.0})}, fixture::se(1.0), 6, 2, rng);
  REQUIRE(single.size() == 1);
  Rng again(19);
  CHECK((single[0].matrix() - sample_uniform(6, 2, again).matrix()).cwiseAbs().maxCoeff() == 0.0);

  PointSet grid;
  for (int i = 0; i < 10; ++i) grid.push_back(vec({0.1 * i}));

  // Tiny length-scale: consecutive draws behave like independent uniform pairs.
  std::vector<double> path_d, pair_d;
  for (int rep = 0; rep < 100; ++rep) {
    const auto draws = sample_path(grid, fixture::se(1e-7), 6, 2, rng);
    for (std::size_t i = 1; i < draws.size(); ++i) path_d.push_back(riemannian_distance(draws[i - 1], draws[i]));
  }
  for (std::size_t s = 0; s < path_d.size(); ++s) {
    pair_d.push_back(riemannian_distance(sample_uniform(6, 2, rng), sample_uniform(6, 2, rng)));
  }
  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0, q = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) q += (x - m) * (x - m);
    return std::pair{m, std::sqrt(q / static_cast<double>(v.size() - 1))};
  };
  const auto [m1, s1] = mean_sd(path_d);
  const auto [m2, s2] = mean_sd(pair_d);
  const double se = std::sqrt((s1 * s1 + s2 * s2) / static_cast<double>(path_d.size()));
  CHECK(std::abs(m1 - m2) < 4.0 * se);

  // Long length-scale (10x the grid span): consecutive draws stay close. The
  // conditional MACG has a heavy tail, so the median is checked, not the max.
  std::vector<double> smooth_d;
  for (int rep = 0; rep < 50; ++rep) {
    const auto draws = sample_path(grid, fixture::se(9.0), 6, 2, rng);
    for (std::size_t i = 1; i < draws.size(); ++i) smooth_d.push_back(riemannian_distance(draws[i - 1], draws[i]));
  }
  std::nth_element(smooth_d.begin(), smooth_d.begin() + static_cast<std::ptrdiff_t>(smooth_d.size() / 2), smooth_d.end());
  const double median = smooth_d[smooth_d.size() / 2];
  CHECK(median < 0.2);
  CHECK(median < 0.1 * m2);
}

TEST_CASE("reduced operator equals the direct projection") {
  const fixture::Instance inst = fixture::random_instance(40, 3, 4, 1, 20);
  const GpsModel m = fit_instance(inst, 1.0);
  const PredictiveSubspace p = predict(m, vec({2.2}), m.rank());
  const Matrix& vt = m.global_basis();
  const Matrix v = p.mean().matrix();
  Rng rng(21);

  CHECK((reduced_operator(p, Matrix::Identity(m.rank(), m.rank())) - Matrix::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  const Matrix a = standard_normal(40, 40, rng);
  CHECK((reduced_operator(p, vt.transpose() * a * vt) - v.transpose() * a * v).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix diag = standard_normal(40, 1, rng).col(0).asDiagonal();
  CHECK((reduced_operator(p, vt.transpose() * diag * vt) - v.transpose() * diag * v).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK_THROWS_AS(reduced_operator(p, Matrix::Identity(2, 2)), Error);
}

TEST_CASE("with_kernel keeps the factorization") {
  const fixture::Instance inst = fixture::random_instance(10, 2, 4, 1, 22);
  const GpsModel a = fit_instance(inst, 1.0);
  const GpsModel b = a.with_kernel(fixture::se(2.0));
  const GpsModel c = fit_instance(inst, 2.0);
  CHECK(&a.global_basis() == &b.global_basis());
  const PredictiveSubspace pb = predict(b, vec({1.1}));
  const PredictiveSubspace pc = predict(c, vec({1.1}));
  CHECK(riemannian_distance(pb.mean(), pc.mean()) < 1e-10);
}

}  // TEST_SUITE
