#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "gpsr/baseline.hpp"
#include "gpsr/grassmann.hpp"
#include "gpsr/kernel.hpp"

namespace gpsr {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// E x' = A x + B u, y = C x at one parameter value.
struct LtiSystem {
  SparseMatrix e;
  SparseMatrix a;
  Matrix b;  // n x p
  Matrix c;  // q x n

  Index n() const noexcept { return a.rows(); }
};

struct AffineTerm {
  SparseMatrix matrix;
  std::function<double(const ParameterPoint&)> coefficient;
};

/// E(theta) = sum_j e_j(theta) E_j, A(theta) = sum_j a_j(theta) A_j.
struct ParametricSystem {
  Index d = 1;
  std::vector<AffineTerm> e_terms;
  std::vector<AffineTerm> a_terms;
  Matrix b;
  Matrix c;

  LtiSystem at(const ParameterPoint& theta) const;
};

/// Centered finite-difference convection-diffusion on [0, 1] with n interior
/// nodes and homogeneous Dirichlet ends, parameters in [0, 1]^d.
///   d = 1: E = I, A = A_diff + 2 theta A_conv.
///   d = 3: theta = (c, kappa, v) mapped to c in [0, 1], kappa in [1, 2],
///          v in [0.1, 2]; E = I + c E_f, A = A_ds + kappa A_df + c v A_c,
///          with the fluid region x >= 1/2.
/// B is a unit source at node n/4, C = x(3n/4) - x(n/4).
ParametricSystem convection_diffusion(Index n, Index d);
LtiSystem build_test_system(Index n, const ParameterPoint& theta);

using InputSignal = std::function<Vector(double)>;

/// u(t) = 1 for every input channel.
InputSignal unit_step(Index p);

struct SnapshotSet {
  Matrix states;  // n x J, x(t_1) ... x(t_J)
  Vector times;
};

/// Implicit Euler from x_0 = 0 with J steps of T / J.
SnapshotSet simulate(const LtiSystem& system, const InputSignal& u, double horizon, Index steps);

struct RomModel {
  Matrix e;
  Matrix a;
  Matrix b;
  Matrix c;
};

/// Galerkin projection with trial = test basis V.
RomModel galerkin_reduce(const LtiSystem& system, const StiefelBasis& v);

/// Reduced states x_r(t_1) ... x_r(t_J), k x J.
Matrix simulate(const RomModel& rom, const InputSignal& u, double horizon, Index steps);

/// Top-k left singular vectors of the snapshot matrix.
StiefelBasis pod_basis(const Matrix& snapshots, Index k);

/// sqrt(sum ||x_i - V x_r,i||^2 dt) / sqrt(sum ||x_i||^2 dt)
double relative_l2_state_error(const SnapshotSet& full, const Matrix& rom_states, const Matrix& v);

struct BenchmarkConfig {
  Index n = 400;
  Index d = 1;
  Index k = 10;
  std::string design = "equispaced";  // or "lhs"
  Index train_count = 7;
  std::uint64_t train_seed = 0;
  Index test_count = 50;
  std::uint64_t test_seed = 1;
  std::optional<PointSet> test_points;  // overrides the uniform test draw
  std::vector<std::string> methods{"local_pod", "gps", "subspace_interp"};
  std::optional<Vector> lengthscales;  // fixed kernel; skips tuning
  double jitter = kDefaultJitter;
  std::string tuning = "loocv";        // or "rule"
  InterpConfig interp;
  double horizon = 1.0;
  Index steps = 200;
  std::size_t threads = 0;             // 0: GPS_NUM_THREADS / hardware
};

BenchmarkConfig benchmark_config_from_json(const std::string& text);

struct BenchmarkRow {
  std::string method;
  ParameterPoint theta;
  double dg_to_local = 0.0;
  double rel_l2_err = 0.0;
  double predict_ms = 0.0;
  std::string failure;  // empty on success
};

struct BenchmarkReport {
  Index d = 1;
  PointSet train_points;
  PointSet test_points;
  Vector beta;
  double fit_ms = 0.0;
  std::vector<BenchmarkRow> rows;

  /// Mean relative L2 error of one method over its successful rows.
  double mean_error(const std::string& method) const;
};

BenchmarkReport run_benchmark(const BenchmarkConfig& config);

/// Columns: method, theta_1..theta_d, dg_to_local, rel_l2_err, predict_ms.
std::string benchmark_csv(const BenchmarkReport& report);

PointSet equispaced_design(Index l);
PointSet latin_hypercube(Index l, Index d, std::uint64_t seed);
PointSet uniform_points(Index count, Index d, std::uint64_t seed);

}  // namespace gpsr
