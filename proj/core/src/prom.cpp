#include "gpsr/prom.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "gpsr/error.hpp"
#include "gpsr/gps.hpp"
#include "gpsr/model_selection.hpp"
#include "gpsr/parallel.hpp"

namespace gpsr {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SparseMatrix from_triplets(Index n, const Triplets& t) {
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

double node_x(Index i, double h) { return static_cast<double>(i + 1) * h; }

// Dirichlet Laplacian restricted to the edges whose midpoint satisfies `keep`.
SparseMatrix edge_laplacian(Index n, const std::function<bool(double)>& keep) {
  const double h = 1.0 / static_cast<double>(n + 1);
  const double s = 1.0 / (h * h);
  Triplets t;
  if (keep(0.5 * h)) t.emplace_back(0, 0, -s);
  if (keep(1.0 - 0.5 * h)) t.emplace_back(n - 1, n - 1, -s);
  for (Index i = 0; i + 1 < n; ++i) {
    if (!keep(node_x(i, h) + 0.5 * h)) continue;
    t.emplace_back(i, i, -s);
    t.emplace_back(i + 1, i + 1, -s);
    t.emplace_back(i, i + 1, s);
    t.emplace_back(i + 1, i, s);
  }
  return from_triplets(n, t);
}

// -(x_{i+1} - x_{i-1}) / 2h on the nodes satisfying `keep`.
SparseMatrix convection(Index n, const std::function<bool(double)>& keep) {
  const double h = 1.0 / static_cast<double>(n + 1);
  Triplets t;
  for (Index i = 0; i + 1 < n; ++i) {
    if (!keep(node_x(i, h)) || !keep(node_x(i + 1, h))) continue;
    t.emplace_back(i, i + 1, -0.5 / h);
    t.emplace_back(i + 1, i, 0.5 / h);
  }
  return from_triplets(n, t);
}

SparseMatrix node_indicator(Index n, const std::function<bool(double)>& keep) {
  const double h = 1.0 / static_cast<double>(n + 1);
  Triplets t;
  for (Index i = 0; i < n; ++i) {
    if (keep(node_x(i, h))) t.emplace_back(i, i, 1.0);
  }
  return from_triplets(n, t);
}

SparseMatrix identity(Index n) {
  SparseMatrix m(n, n);
  m.setIdentity();
  return m;
}

void append_double(std::string& out, double value) {
  if (std::isnan(value)) {
    out += "nan";
    return;
  }
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, end);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

LtiSystem ParametricSystem::at(const ParameterPoint& theta) const {
  if (theta.size() != d) {
    std::ostringstream msg;
    msg << "system expects " << d << " parameters, got " << theta.size();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  LtiSystem sys;
  const Index n = b.rows();
  sys.e = SparseMatrix(n, n);
  sys.a = SparseMatrix(n, n);
  for (const auto& term : e_terms) sys.e += term.coefficient(theta) * term.matrix;
  for (const auto& term : a_terms) sys.a += term.coefficient(theta) * term.matrix;
  sys.e.prune(0.0);
  sys.a.prune(0.0);
  sys.b = b;
  sys.c = c;
  return sys;
}

ParametricSystem convection_diffusion(Index n, Index d) {
  if (n < 10) throw Error(ErrorKind::BadDimension, "the test system needs n >= 10");
  if (d != 1 && d != 3) throw Error(ErrorKind::BadDimension, "the test system supports d = 1 or 3");
  ParametricSystem sys;
  sys.d = d;
  const auto all = [](double) { return true; };
  const auto fluid = [](double x) { return x >= 0.5; };
  const auto solid = [](double x) { return x < 0.5; };
  const auto one = [](const ParameterPoint&) { return 1.0; };

  sys.e_terms.push_back({identity(n), one});
  if (d == 1) {
    sys.a_terms.push_back({edge_laplacian(n, all), one});
    sys.a_terms.push_back({convection(n, all), [](const ParameterPoint& t) { return 2.0 * t(0); }});
  } else {
    sys.e_terms.push_back({node_indicator(n, fluid), [](const ParameterPoint& t) { return t(0); }});
    sys.a_terms.push_back({edge_laplacian(n, solid), one});
    sys.a_terms.push_back(
        {edge_laplacian(n, fluid), [](const ParameterPoint& t) { return 1.0 + t(1); }});
    sys.a_terms.push_back({convection(n, fluid), [](const ParameterPoint& t) {
                             return t(0) * (0.1 + 1.9 * t(2));
                           }});
  }
  const Index src = n / 4;
  const Index probe = (3 * n) / 4;
  sys.b = Matrix::Zero(n, 1);
  sys.b(src, 0) = 1.0;
  sys.c = Matrix::Zero(1, n);
  sys.c(0, probe) = 1.0;
  sys.c(0, src) -= 1.0;
  return sys;
}

LtiSystem build_test_system(Index n, const ParameterPoint& theta) {
  return convection_diffusion(n, theta.size()).at(theta);
}

InputSignal unit_step(Index p) {
  return [p](double) { return Vector::Ones(p); };
}

SnapshotSet simulate(const LtiSystem& system, const InputSignal& u, double horizon, Index steps) {
  if (steps < 1 || !(horizon > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "simulation needs T > 0 and J >= 1");
  }
  const Index n = system.n();
  const double dt = horizon / static_cast<double>(steps);
  const SparseMatrix step = system.e - dt * system.a;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(step);
  lu.factorize(step);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::SingularStep, "implicit Euler matrix is singular");

  SnapshotSet out;
  out.states.resize(n, steps);
  out.times.resize(steps);
  Vector x = Vector::Zero(n);
  for (Index i = 0; i < steps; ++i) {
    const double t = dt * static_cast<double>(i + 1);
    const Vector rhs = system.e * x + dt * (system.b * u(t));
    x = lu.solve(rhs);
    out.states.col(i) = x;
    out.times(i) = t;
  }
  return out;
}

RomModel galerkin_reduce(const LtiSystem& system, const StiefelBasis& v) {
  if (v.n() != system.n()) {
    std::ostringstream msg;
    msg << "basis has " << v.n() << " rows, system has order " << system.n();
    throw Error(ErrorKind::ShapeMismatch, msg.str());
  }
  const Matrix& vm = v.matrix();
  RomModel rom;
  rom.e = vm.transpose() * (system.e * vm);
  rom.a = vm.transpose() * (system.a * vm);
  rom.b = vm.transpose() * system.b;
  rom.c = system.c * vm;
  return rom;
}

Matrix simulate(const RomModel& rom, const InputSignal& u, double horizon, Index steps) {
  if (steps < 1 || !(horizon > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "simulation needs T > 0 and J >= 1");
  }
  const Index k = rom.a.rows();
  const double dt = horizon / static_cast<double>(steps);
  const Eigen::PartialPivLU<Matrix> lu(rom.e - dt * rom.a);
  if (!(lu.rcond() >= 1e-14)) throw Error(ErrorKind::SingularStep, "reduced step matrix is singular");
  Matrix out(k, steps);
  Vector x = Vector::Zero(k);
  for (Index i = 0; i < steps; ++i) {
    const double t = dt * static_cast<double>(i + 1);
    x = lu.solve(rom.e * x + dt * (rom.b * u(t)));
    out.col(i) = x;
  }
  return out;
}

StiefelBasis pod_basis(const Matrix& snapshots, Index k) {
  if (k < 1 || k > std::min(snapshots.rows(), snapshots.cols())) {
    throw Error(ErrorKind::RankDeficient, "not enough snapshots for the requested basis size");
  }
  Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  if (!(s(k - 1) > 1e-14 * s(0))) {
    std::ostringstream msg;
    msg << "snapshot matrix has numerical rank below " << k;
    throw Error(ErrorKind::RankDeficient, msg.str());
  }
  return StiefelBasis(svd.matrixU().leftCols(k));
}

double relative_l2_state_error(const SnapshotSet& full, const Matrix& rom_states, const Matrix& v) {
  if (rom_states.cols() != full.states.cols() || v.rows() != full.states.rows() ||
      v.cols() != rom_states.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "trajectories do not share a time grid or basis");
  }
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < full.states.cols(); ++i) {
    const double dt = full.times(i) - (i > 0 ? full.times(i - 1) : 0.0);
    num += (full.states.col(i) - v * rom_states.col(i)).squaredNorm() * dt;
    den += full.states.col(i).squaredNorm() * dt;
  }
  if (!(den > 0.0)) throw Error(ErrorKind::ZeroNorm, "full trajectory is identically zero");
  return std::sqrt(num / den);
}

PointSet equispaced_design(Index l) {
  if (l < 1) throw Error(ErrorKind::InvalidArgument, "need at least one point");
  PointSet out;
  for (Index i = 0; i < l; ++i) {
    const double x = l == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(l - 1);
    out.push_back(Vector::Constant(1, x));
  }
  return out;
}

PointSet latin_hypercube(Index l, Index d, std::uint64_t seed) {
  if (l < 1 || d < 1) throw Error(ErrorKind::InvalidArgument, "need l, d >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointSet out(static_cast<std::size_t>(l), Vector(d));
  for (Index j = 0; j < d; ++j) {
    std::vector<Index> strata(static_cast<std::size_t>(l));
    std::iota(strata.begin(), strata.end(), Index{0});
    std::shuffle(strata.begin(), strata.end(), rng);
    for (Index i = 0; i < l; ++i) {
      out[static_cast<std::size_t>(i)](j) =
          (static_cast<double>(strata[static_cast<std::size_t>(i)]) + unit(rng)) /
          static_cast<double>(l);
    }
  }
  return out;
}

PointSet uniform_points(Index count, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointSet out;
  for (Index i = 0; i < count; ++i) {
    Vector p(d);
    for (Index j = 0; j < d; ++j) p(j) = unit(rng);
    out.push_back(p);
  }
  return out;
}

BenchmarkConfig benchmark_config_from_json(const std::string& text) {
  BenchmarkConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.contains("system")) {
      cfg.n = j["system"].value("n", cfg.n);
      cfg.d = j["system"].value("d", cfg.d);
    }
    cfg.k = j.value("k", cfg.k);
    if (j.contains("train")) {
      cfg.design = j["train"].value("design", cfg.design);
      cfg.train_count = j["train"].value("l", cfg.train_count);
      cfg.train_seed = j["train"].value("seed", cfg.train_seed);
    }
    if (j.contains("test")) {
      cfg.test_count = j["test"].value("count", cfg.test_count);
      cfg.test_seed = j["test"].value("seed", cfg.test_seed);
      if (j["test"].contains("points")) {
        PointSet pts;
        for (const auto& row : j["test"]["points"]) {
          const auto v = row.get<std::vector<double>>();
          pts.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
        }
        cfg.test_points = std::move(pts);
      }
    }
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("kernel")) {
      const auto& kj = j["kernel"];
      if (kj.contains("lengthscales")) {
        const auto beta = kj["lengthscales"].get<std::vector<double>>();
        cfg.lengthscales = Eigen::Map<const Vector>(beta.data(), static_cast<Index>(beta.size()));
      }
      cfg.jitter = kj.value("jitter", cfg.jitter);
    }
    cfg.tuning = j.value("tuning", cfg.tuning);
    cfg.interp.scheme = cfg.d == 1 ? InterpScheme::Lagrange1D : InterpScheme::MultiquadricRBF;
    if (j.contains("interp")) {
      const auto& ij = j["interp"];
      cfg.interp.neighbors = ij.value("nr", cfg.interp.neighbors);
      if (ij.contains("scheme")) {
        const auto scheme = ij["scheme"].get<std::string>();
        if (scheme == "lagrange") {
          cfg.interp.scheme = InterpScheme::Lagrange1D;
        } else if (scheme == "rbf") {
          cfg.interp.scheme = InterpScheme::MultiquadricRBF;
        } else {
          throw Error(ErrorKind::Parse, "unknown interpolation scheme '" + scheme + "'");
        }
      }
      if (ij.contains("shape")) cfg.interp.rbf_shape = ij["shape"].get<double>();
    }
    if (j.contains("simulation")) {
      cfg.horizon = j["simulation"].value("T", cfg.horizon);
      cfg.steps = j["simulation"].value("J", cfg.steps);
    }
    cfg.threads = j.value("threads", cfg.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("benchmark config: ") + e.what());
  }
  for (const auto& m : cfg.methods) {
    if (m != "local_pod" && m != "gps" && m != "subspace_interp") {
      throw Error(ErrorKind::Parse, "unknown method '" + m + "'");
    }
  }
  if (cfg.tuning != "loocv" && cfg.tuning != "rule") {
    throw Error(ErrorKind::Parse, "tuning must be 'loocv' or 'rule'");
  }
  if (cfg.design != "equispaced" && cfg.design != "lhs") {
    throw Error(ErrorKind::Parse, "design must be 'equispaced' or 'lhs'");
  }
  return cfg;
}

double BenchmarkReport::mean_error(const std::string& method) const {
  double sum = 0.0;
  Index count = 0;
  for (const auto& row : rows) {
    if (row.method == method && row.failure.empty()) {
      sum += row.rel_l2_err;
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : std::nan("");
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  const ParametricSystem system = convection_diffusion(cfg.n, cfg.d);
  const InputSignal u = unit_step(system.b.cols());
  const std::size_t workers = cfg.threads > 0 ? cfg.threads : worker_count();

  BenchmarkReport report;
  report.d = cfg.d;
  if (cfg.design == "equispaced") {
    if (cfg.d != 1) throw Error(ErrorKind::InvalidArgument, "equispaced design needs d = 1");
    report.train_points = equispaced_design(cfg.train_count);
  } else {
    report.train_points = latin_hypercube(cfg.train_count, cfg.d, cfg.train_seed);
  }
  if (cfg.test_points) {
    for (const auto& p : *cfg.test_points) {
      if (p.size() != cfg.d) throw Error(ErrorKind::DimensionMismatch, "test point dimension");
    }
    report.test_points = *cfg.test_points;
  } else {
    report.test_points = uniform_points(cfg.test_count, cfg.d, cfg.test_seed);
  }

  const auto l = report.train_points.size();
  std::vector<std::optional<StiefelBasis>> train(l);
  parallel_for(l, [&](std::size_t i) {
    const SnapshotSet snaps = simulate(system.at(report.train_points[i]), u, cfg.horizon, cfg.steps);
    train[i] = pod_basis(snaps.states, cfg.k);
  }, workers);
  std::vector<StiefelBasis> bases;
  for (auto& b : train) bases.push_back(std::move(*b));

  const auto fit_start = std::chrono::steady_clock::now();
  const Vector rule = rule_of_thumb(cfg.d, static_cast<Index>(l), parameter_ranges(report.train_points));
  const Vector initial = cfg.d == 1 ? Vector::Constant(1, rule(0)) : rule;
  GpsModel model = fit(report.train_points, bases, KernelSpec::squared_exponential(initial, cfg.jitter));
  if (cfg.lengthscales) {
    model = model.with_kernel(model.kernel().with_lengthscales(*cfg.lengthscales));
  } else if (cfg.tuning == "loocv" && l >= 3) {
    model = model.with_kernel(model.kernel().with_lengthscales(tune(model).beta_star));
  }
  report.fit_ms = elapsed_ms(fit_start);
  report.beta = model.kernel().lengthscales;

  const std::size_t methods = cfg.methods.size();
  report.rows.resize(report.test_points.size() * methods);
  parallel_for(report.test_points.size(), [&](std::size_t j) {
    const ParameterPoint& theta = report.test_points[j];
    const LtiSystem sys = system.at(theta);
    auto start = std::chrono::steady_clock::now();
    const SnapshotSet full = simulate(sys, u, cfg.horizon, cfg.steps);
    const StiefelBasis local = pod_basis(full.states, cfg.k);
    const double local_ms = elapsed_ms(start);

    for (std::size_t m = 0; m < methods; ++m) {
      BenchmarkRow& row = report.rows[j * methods + m];
      row.method = cfg.methods[m];
      row.theta = theta;
      try {
        start = std::chrono::steady_clock::now();
        std::optional<StiefelBasis> v;
        if (row.method == "local_pod") {
          v = local;
        } else if (row.method == "gps") {
          v = predict(model, theta).mean();
        } else {
          v = subspace_interpolate(theta, report.train_points, bases, cfg.interp);
        }
        row.predict_ms = row.method == "local_pod" ? local_ms : elapsed_ms(start);
        row.dg_to_local = riemannian_distance(*v, local);
        const Matrix xr = simulate(galerkin_reduce(sys, *v), u, cfg.horizon, cfg.steps);
        row.rel_l2_err = relative_l2_state_error(full, xr, v->matrix());
      } catch (const Error& e) {
        row.failure = e.what();
        row.dg_to_local = std::nan("");
        row.rel_l2_err = std::nan("");
      }
    }
  }, workers);
  return report;
}

std::string benchmark_csv(const BenchmarkReport& report) {
  std::string out = "method";
  for (Index j = 0; j < report.d; ++j) out += ",theta_" + std::to_string(j + 1);
  out += ",dg_to_local,rel_l2_err,predict_ms\n";
  for (const auto& row : report.rows) {
    out += row.method;
    for (Index j = 0; j < row.theta.size(); ++j) {
      out += ',';
      append_double(out, row.theta(j));
    }
    for (double v : {row.dg_to_local, row.rel_l2_err, row.predict_ms}) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace gpsr
