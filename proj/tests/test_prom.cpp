#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gpsr/error.hpp"
#include "gpsr/prom.hpp"
#include "oracles.hpp"

using namespace gpsr;
using fixture::vec;

namespace {

SparseMatrix sparse(const Matrix& m) { return m.sparseView(); }

LtiSystem scalar_system() {
  LtiSystem s;
  s.e = sparse(Matrix::Constant(1, 1, 1.0));
  s.a = sparse(Matrix::Constant(1, 1, -1.0));
  s.b = Matrix::Constant(1, 1, 1.0);
  s.c = Matrix::Constant(1, 1, 1.0);
  return s;
}

double reconstruction_error2(const Matrix& x, const Matrix& v) {
  return (x - v * (v.transpose() * x)).squaredNorm();
}

std::string strip_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

BenchmarkConfig small_config() {
  BenchmarkConfig cfg;
  cfg.n = 60;
  cfg.k = 4;
  cfg.train_count = 5;
  cfg.test_count = 6;
  cfg.tuning = "rule";
  cfg.steps = 60;
  return cfg;
}

}  // namespace

TEST_SUITE("prom") {

TEST_CASE("test system is stable") {
  for (Index d : {Index{1}, Index{3}}) {
    for (double t : {0.0, 0.5, 1.0}) {
      const LtiSystem s = build_test_system(50, Vector::Constant(d, t));
      const Matrix op = Matrix(s.e).fullPivLu().solve(Matrix(s.a));
      Eigen::EigenSolver<Matrix> eig(op, false);
      CHECK(eig.eigenvalues().real().maxCoeff() < 0.0);
    }
  }
}

TEST_CASE("pure diffusion is symmetric and assembly is affine") {
  const Matrix a0 = build_test_system(30, vec({0.0})).a;
  CHECK((a0 - a0.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  for (Index d : {Index{1}, Index{3}}) {
    const ParametricSystem sys = convection_diffusion(30, d);
    const Vector theta = Vector::Constant(d, 0.37);
    const LtiSystem at = sys.at(theta);
    SparseMatrix a(30, 30), e(30, 30);
    for (const auto& term : sys.a_terms) a += term.coefficient(theta) * term.matrix;
    for (const auto& term : sys.e_terms) e += term.coefficient(theta) * term.matrix;
    CHECK((Matrix(at.a) - Matrix(a)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((Matrix(at.e) - Matrix(e)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("bad system dimensions") {
  for (auto [n, d] : {std::pair<Index, Index>{5, 1}, {30, 2}}) {
    try {
      convection_diffusion(n, d);
      FAIL("expected BadDimension");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::BadDimension);
    }
  }
}

TEST_CASE("zero input gives zero snapshots") {
  const LtiSystem s = build_test_system(20, vec({0.3}));
  const SnapshotSet snaps = simulate(s, [](double) { return Vector::Zero(1); }, 1.0, 10);
  CHECK(snaps.states.cols() == 10);
  CHECK(snaps.states.cwiseAbs().maxCoeff() == 0.0);
  CHECK(snaps.times(9) == doctest::Approx(1.0));
}

TEST_CASE("implicit Euler on the scalar test equation") {
  const SnapshotSet snaps = simulate(scalar_system(), unit_step(1), 10.0, 1000);
  double worst = 0.0;
  for (Index j = 0; j < snaps.states.cols(); ++j) {
    worst = std::max(worst, std::abs(snaps.states(0, j) - (1.0 - std::exp(-snaps.times(j)))));
  }
  CHECK(worst < 1e-2);
  CHECK(snaps.states(0, 999) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("implicit Euler converges at first order") {
  // The step start excites modes with rates near 4 (n+1)^2, so the max error
  // is only in the asymptotic regime once dt resolves them.
  const LtiSystem s = build_test_system(20, vec({0.5}));
  const Index fine = 409600;
  const Matrix ref = simulate(s, unit_step(1), 1.0, fine).states;
  auto error = [&](Index j) {
    const Matrix x = simulate(s, unit_step(1), 1.0, j).states;
    const Index stride = fine / j;
    double worst = 0.0;
    for (Index i = 0; i < j; ++i) worst = std::max(worst, (x.col(i) - ref.col((i + 1) * stride - 1)).norm());
    return worst;
  };
  const double ratio = error(6400) / error(12800);
  CHECK(ratio > 1.8);
  CHECK(ratio < 2.2);
}

TEST_CASE("singular step matrix") {
  LtiSystem s;
  s.e = SparseMatrix(2, 2);
  s.a = SparseMatrix(2, 2);
  s.b = Matrix::Ones(2, 1);
  s.c = Matrix::Ones(1, 2);
  try {
    simulate(s, unit_step(1), 1.0, 4);
    FAIL("expected SingularStep");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularStep);
  }
}

TEST_CASE("POD basis") {
  Rng rng(1);
  const StiefelBasis q = sample_uniform(30, 3, rng);
  const Matrix low = q.matrix() * standard_normal(3, 12, rng);
  CHECK(riemannian_distance(pod_basis(low, 3), q) < 1e-10);

  const Matrix x = standard_normal(30, 12, rng);
  const StiefelBasis v = pod_basis(x, 4);
  const Vector s = Eigen::JacobiSVD<Matrix>(x).singularValues();
  CHECK(reconstruction_error2(x, v.matrix()) ==
        doctest::Approx(s.tail(s.size() - 4).squaredNorm()).epsilon(1e-10));

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
  CHECK(riemannian_distance(pod_basis(x * perm, 4), v) < 1e-10);

  const double best = reconstruction_error2(x, v.matrix());
  for (int trial = 0; trial < 100; ++trial) {
    CHECK(reconstruction_error2(x, sample_uniform(30, 4, rng).matrix()) >= best);
  }

  try {
    pod_basis(low, 4);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }
}

TEST_CASE("Galerkin reduction") {
  const LtiSystem s = build_test_system(20, vec({0.4}));
  const StiefelBasis identity(Matrix::Identity(20, 20));
  const RomModel full = galerkin_reduce(s, identity);
  CHECK((full.a - Matrix(s.a)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((full.e - Matrix(s.e)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((full.b - s.b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((full.c - s.c).cwiseAbs().maxCoeff() == 0.0);
  const SnapshotSet ref = simulate(s, unit_step(1), 1.0, 50);
  const Matrix xr = simulate(full, unit_step(1), 1.0, 50);
  CHECK((xr - ref.states).cwiseAbs().maxCoeff() < 1e-10);

  Rng rng(2);
  const RomModel small = galerkin_reduce(s, sample_uniform(20, 3, rng));
  CHECK(small.e.rows() == 3);
  CHECK(small.a.rows() == 3);
  CHECK(simulate(small, unit_step(1), 1.0, 50).rows() == 3);
  CHECK_THROWS_AS(galerkin_reduce(s, sample_uniform(21, 3, rng)), Error);
}

TEST_CASE("relative L2 state error") {
  const LtiSystem s = build_test_system(20, vec({0.4}));
  const SnapshotSet ref = simulate(s, unit_step(1), 1.0, 30);
  const Matrix id = Matrix::Identity(20, 20);
  CHECK(relative_l2_state_error(ref, ref.states, id) == 0.0);
  CHECK(relative_l2_state_error(ref, Matrix::Zero(3, 30), Matrix::Identity(20, 3)) == doctest::Approx(1.0));

  Rng rng(3);
  const Matrix v = sample_uniform(20, 3, rng).matrix();
  const Matrix xr = standard_normal(3, 30, rng);
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < 30; ++i) {
    num += (ref.states.col(i) - v * xr.col(i)).squaredNorm();
    den += ref.states.col(i).squaredNorm();
  }
  CHECK(std::abs(relative_l2_state_error(ref, xr, v) - std::sqrt(num / den)) < 1e-12);

  SnapshotSet zero = ref;
  zero.states.setZero();
  CHECK_THROWS_AS(relative_l2_state_error(zero, xr, v), Error);
}

TEST_CASE("benchmark at the training points reproduces local POD") {
  BenchmarkConfig cfg = small_config();
  cfg.test_points = equispaced_design(cfg.train_count);
  const BenchmarkReport report = run_benchmark(cfg);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    if (report.rows[i].method != "gps") continue;
    const BenchmarkRow& gps = report.rows[i];
    for (const auto& local : report.rows) {
      if (local.method == "local_pod" && local.theta == gps.theta) {
        CHECK(gps.rel_l2_err == doctest::Approx(local.rel_l2_err).epsilon(1e-10));
        CHECK(gps.dg_to_local < 1e-10);
      }
    }
  }
}

TEST_CASE("benchmark report") {
  const BenchmarkConfig cfg = small_config();
  const BenchmarkReport a = run_benchmark(cfg);
  const BenchmarkReport b = run_benchmark(cfg);
  const std::string csv = benchmark_csv(a);
  CHECK(csv.substr(0, csv.find('\n')) == "method,theta_1,dg_to_local,rel_l2_err,predict_ms");
  CHECK(strip_timing(csv) == strip_timing(benchmark_csv(b)));
  CHECK(a.rows.size() == 3 * 6);
  for (const auto& row : a.rows) {
    CHECK(row.failure.empty());
    CHECK(std::isfinite(row.dg_to_local));
    CHECK(std::isfinite(row.rel_l2_err));
  }
  CHECK(a.mean_error("gps") <= a.mean_error("subspace_interp"));
}

TEST_CASE("three-parameter benchmark") {
  BenchmarkConfig cfg = small_config();
  cfg.d = 3;
  cfg.design = "lhs";
  cfg.interp.scheme = InterpScheme::MultiquadricRBF;
  cfg.train_count = 10;
  cfg.test_count = 4;
  const BenchmarkReport r = run_benchmark(cfg);
  CHECK(r.beta.size() == 3);
  const std::string csv = benchmark_csv(r);
  CHECK(csv.substr(0, csv.find('\n')) == "method,theta_1,theta_2,theta_3,dg_to_local,rel_l2_err,predict_ms");
  for (const auto& row : r.rows) CHECK(std::isfinite(row.rel_l2_err));
}

TEST_CASE("benchmark config parsing") {
  const BenchmarkConfig cfg = benchmark_config_from_json(R"({
    "system": {"n": 100, "d": 3}, "k": 6,
    "train": {"design": "lhs", "l": 12, "seed": 4},
    "test": {"count": 9, "seed": 5},
    "methods": ["gps"], "kernel": {"lengthscales": [0.5, 0.6, 0.7], "jitter": 1e-9},
    "tuning": "rule", "interp": {"nr": 4, "scheme": "rbf", "shape": 0.3},
    "simulation": {"T": 2.0, "J": 100}})");
  CHECK(cfg.n == 100);
  CHECK(cfg.d == 3);
  CHECK(cfg.k == 6);
  CHECK(cfg.train_count == 12);
  CHECK(cfg.test_count == 9);
  CHECK(cfg.methods == std::vector<std::string>{"gps"});
  CHECK(cfg.lengthscales->size() == 3);
  CHECK(cfg.interp.neighbors == 4);
  CHECK(*cfg.interp.rbf_shape == 0.3);
  CHECK(cfg.steps == 100);
  CHECK_THROWS_AS(benchmark_config_from_json("{not json"), Error);
  CHECK_THROWS_AS(benchmark_config_from_json(R"({"interp": {"scheme": "spline"}})"), Error);
}

TEST_CASE("designs") {
  const PointSet eq = equispaced_design(5);
  CHECK(eq.front()(0) == 0.0);
  CHECK(eq.back()(0) == 1.0);
  const PointSet lhs = latin_hypercube(10, 3, 7);
  for (Index j = 0; j < 3; ++j) {
    std::vector<int> bins(10, 0);
    for (const auto& p : lhs) ++bins[static_cast<std::size_t>(std::floor(p(j) * 10))];
    CHECK(std::all_of(bins.begin(), bins.end(), [](int c) { return c == 1; }));
  }
  CHECK(latin_hypercube(10, 3, 7)[4] == lhs[4]);
}

}  // TEST_SUITE
