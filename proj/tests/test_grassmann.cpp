#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gpsr/error.hpp"
#include "gpsr/grassmann.hpp"
#include "oracles.hpp"

using namespace gpsr;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::InvalidArgument;
}

Matrix line(double alpha) {
  Matrix m(2, 1);
  m << std::cos(alpha), std::sin(alpha);
  return m;
}

}  // namespace

TEST_SUITE("grassmann") {

TEST_CASE("project_pi keeps orthonormal input and absorbs scaling") {
  Rng rng(1);
  const StiefelBasis x = sample_uniform(7, 3, rng);
  CHECK((project_pi(x.matrix()).matrix() - x.matrix()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((project_pi(2.0 * x.matrix()).matrix() - x.matrix()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("project_pi of a random matrix spans the same subspace") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = standard_normal(6, 2, rng);
    const StiefelBasis r = project_pi(m);
    CHECK(StiefelBasis::orthonormality_defect(r.matrix()) < 1e-14);
    CHECK(oracle::distance(r.matrix(), m) < 1e-10);
    const Matrix a = standard_normal(2, 2, rng);
    CHECK(oracle::distance(project_pi(m * a).matrix(), m) < 1e-10);
  }
}

TEST_CASE("project_pi rejects rank-deficient input") {
  Matrix m = Matrix::Zero(4, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 1.0;
  CHECK(kind_of([&] { project_pi(m); }) == ErrorKind::RankDeficient);
}

TEST_CASE("StiefelBasis validates its columns") {
  CHECK(kind_of([] { StiefelBasis(Matrix::Constant(3, 2, 1.0)); }) == ErrorKind::NotOrthonormal);
  CHECK(kind_of([] { StiefelBasis(Matrix::Identity(2, 3)); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("principal angles of simple configurations") {
  Rng rng(3);
  const StiefelBasis x = sample_uniform(8, 3, rng);
  CHECK(principal_angles(x, x).cwiseAbs().maxCoeff() < 1e-7);
  for (double alpha : {0.0, 0.3, 1.0, std::numbers::pi / 2}) {
    const Vector a = principal_angles(StiefelBasis(line(0.0)), StiefelBasis(line(alpha)));
    CHECK(a(0) == doctest::Approx(alpha).epsilon(1e-14));
  }
}

TEST_CASE("principal angles match the SVD oracle on random pairs") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const StiefelBasis x = sample_uniform(8, 3, rng);
    const StiefelBasis y = sample_uniform(8, 3, rng);
    const Vector got = principal_angles(x, y);
    const Vector want = oracle::angles_acos(x.matrix(), y.matrix());
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
    for (Index j = 1; j < got.size(); ++j) CHECK(got(j) >= got(j - 1));
  }
}

TEST_CASE("small principal angles keep full precision") {
  Rng rng(5);
  const StiefelBasis x = sample_uniform(10, 2, rng);
  const Matrix perp = (Matrix::Identity(10, 10) - x.matrix() * x.matrix().transpose()) *
                      standard_normal(10, 2, rng);
  const StiefelBasis y = project_pi(x.matrix() + 1e-9 * project_pi(perp).matrix());
  const double d = riemannian_distance(x, y);
  CHECK(d == doctest::Approx(oracle::distance(x.matrix(), y.matrix())).epsilon(1e-6));
  CHECK(d > 1e-9);
}

TEST_CASE("riemannian distance") {
  Rng rng(6);
  const StiefelBasis x = sample_uniform(9, 3, rng);
  const StiefelBasis y = sample_uniform(9, 3, rng);
  CHECK(riemannian_distance(x, x) < 1e-7);
  CHECK(riemannian_distance(StiefelBasis(line(0.0)), StiefelBasis(line(std::numbers::pi / 2))) ==
        doctest::Approx(std::numbers::pi / 2));
  const double d = riemannian_distance(x, y);
  CHECK(d == doctest::Approx(riemannian_distance(y, x)).epsilon(1e-12));
  CHECK(d <= std::numbers::pi / 2 * std::sqrt(3.0));
  const StiefelBasis xq(x.matrix() * oracle::random_orthogonal(3, rng));
  const StiefelBasis yq(y.matrix() * oracle::random_orthogonal(3, rng));
  CHECK(std::abs(riemannian_distance(xq, yq) - d) < 1e-10);
  CHECK(kind_of([&] { riemannian_distance(x, sample_uniform(9, 2, rng)); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("log and exp are mutually inverse away from the cut locus") {
  Rng rng(7);
  const StiefelBasis x = sample_uniform(10, 3, rng);
  CHECK(grassmann_log(x, x).norm() < 1e-7);
  CHECK(riemannian_distance(grassmann_exp(x, TangentVector::zero(x)), x) < 1e-7);
  int tested = 0;
  while (tested < 20) {
    const StiefelBasis y = sample_uniform(10, 3, rng);
    if (principal_angles(x, y).maxCoeff() > std::numbers::pi / 2 - 0.1) continue;
    ++tested;
    const TangentVector delta = grassmann_log(x, y);
    CHECK(riemannian_distance(grassmann_exp(x, delta), y) < 1e-8);
    CHECK(std::abs(delta.norm() - riemannian_distance(x, y)) < 1e-8);
    const StiefelBasis mid = grassmann_exp(x, delta.scaled(0.5));
    CHECK(std::abs(riemannian_distance(mid, x) - riemannian_distance(mid, y)) < 1e-8);
  }
}

TEST_CASE("log signals the cut locus") {
  const StiefelBasis x(line(0.0));
  const StiefelBasis y(line(std::numbers::pi / 2));
  CHECK(kind_of([&] { grassmann_log(x, y); }) == ErrorKind::CutLocus);
}

TEST_CASE("exp rejects a tangent vector based elsewhere") {
  Rng rng(8);
  const StiefelBasis x = sample_uniform(6, 2, rng);
  const StiefelBasis y = sample_uniform(6, 2, rng);
  CHECK(kind_of([&] { grassmann_exp(x, TangentVector::zero(y)); }) == ErrorKind::BaseMismatch);
  CHECK(kind_of([&] { TangentVector(x, x.matrix()); }) == ErrorKind::BaseMismatch);
}

TEST_CASE("uniform sampler second moment is (k/n) I") {
  Rng rng(9);
  const Index n = 8, k = 2;
  const int draws = 10000;
  Matrix mean = Matrix::Zero(n, n), sq = Matrix::Zero(n, n);
  for (int s = 0; s < draws; ++s) {
    const StiefelBasis x = sample_uniform(n, k, rng);
    CHECK(StiefelBasis::orthonormality_defect(x.matrix()) < 1e-12);
    const Matrix p = x.matrix() * x.matrix().transpose();
    mean += p;
    sq += p.cwiseProduct(p);
  }
  mean /= draws;
  const Matrix var = sq / draws - mean.cwiseProduct(mean);
  const Matrix se = (var / draws).cwiseSqrt();
  const Matrix target = (static_cast<double>(k) / n) * Matrix::Identity(n, n);
  CHECK(((mean - target).cwiseAbs().array() <= 5.0 * se.array()).all());
}

TEST_CASE("uniform distribution is invariant under a fixed rotation") {
  Rng rng(10);
  const Index n = 6, k = 2;
  const Matrix q = oracle::random_orthogonal(n, rng);
  const StiefelBasis ref = sample_uniform(n, k, rng);
  std::vector<double> a, b;
  for (int s = 0; s < 1000; ++s) {
    a.push_back(riemannian_distance(sample_uniform(n, k, rng), ref));
    b.push_back(riemannian_distance(StiefelBasis(q * sample_uniform(n, k, rng).matrix()), ref));
  }
  CHECK(oracle::ks_pvalue(a, b) > 0.01);
}

TEST_CASE("MACG sampler") {
  Rng rng(11);
  const Index n = 6, k = 2;
  const StiefelBasis ref = sample_uniform(n, k, rng);
  std::vector<double> uni, scaled;
  for (int s = 0; s < 1000; ++s) {
    uni.push_back(riemannian_distance(sample_uniform(n, k, rng), ref));
    scaled.push_back(riemannian_distance(sample_macg(3.5 * Matrix::Identity(n, n), k, rng), ref));
  }
  CHECK(oracle::ks_pvalue(uni, scaled) > 0.01);

  Rng a(12), b(12);
  CHECK((sample_macg(Matrix::Identity(n, n), k, a).matrix() - sample_uniform(n, k, b).matrix())
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  const StiefelBasis u = sample_uniform(n, k, rng);
  const Matrix low_rank = u.matrix() * u.matrix().transpose();
  for (int s = 0; s < 20; ++s) CHECK(riemannian_distance(sample_macg(low_rank, k, rng), u) < 1e-8);

  Matrix indefinite = Matrix::Identity(n, n);
  indefinite(0, 0) = -1.0;
  CHECK(kind_of([&] { sample_macg(indefinite, k, rng); }) == ErrorKind::NotPSD);
}

}  // TEST_SUITE
