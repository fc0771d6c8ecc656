#include "cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpsr/baseline.hpp"
#include "gpsr/error.hpp"
#include "gpsr/gps.hpp"
#include "gpsr/io.hpp"
#include "gpsr/model_selection.hpp"
#include "gpsr/prom.hpp"

namespace gpsr::cli {

namespace fs = std::filesystem;

namespace {

struct KernelOverrides {
  std::string path;
  std::vector<double> beta;
  std::optional<double> jitter;
};

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

KernelSpec apply_overrides(KernelSpec spec, const KernelOverrides& o) {
  if (!o.path.empty()) spec = read_kernel_json(o.path);
  if (!o.beta.empty()) {
    spec.lengthscales = Eigen::Map<const Vector>(o.beta.data(), static_cast<Index>(o.beta.size()));
  }
  if (o.jitter) spec.jitter = *o.jitter;
  return spec;
}

KernelSpec default_kernel(const PointSet& points) {
  const auto d = points.front().size();
  Vector beta = rule_of_thumb(d, static_cast<Index>(points.size()), parameter_ranges(points));
  if (d == 1) beta = Vector::Constant(1, beta(0));
  return KernelSpec::squared_exponential(beta);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse:
    case ErrorKind::NotOrthonormal:
    case ErrorKind::InvalidArgument:
    case ErrorKind::EmptySample:
      return kInput;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::BadDimension:
    case ErrorKind::TruncationOutOfRange:
      return kShape;
    default:
      return kInternal;
  }
}

int cmd_fit(const std::string& data_dir, const std::string& out_dir, const KernelOverrides& ko,
            std::ostream& out) {
  Dataset data = read_dataset(data_dir);
  if (data.points.empty()) throw Error(ErrorKind::EmptySample, data_dir + ": no samples");
  const KernelSpec kernel = apply_overrides(default_kernel(data.points), ko);
  const GpsModel model = fit(std::move(data.points), std::move(data.bases), kernel);
  save_model(out_dir, model);
  out << "n=" << model.n() << " k=" << model.k() << " l=" << model.l() << " r=" << model.rank()
      << "\n";
  if (model.has_coincident_points()) out << "warning: coincident parameter points\n";
  return kOk;
}

int cmd_predict(const std::string& model_dir, const std::string& thetas, const std::string& out_csv,
                Index t, const std::string& dump_dir, const std::string& format,
                const KernelOverrides& ko, std::ostream& out) {
  GpsModel model = load_model(model_dir);
  model = model.with_kernel(apply_overrides(model.kernel(), ko));
  const PointSet targets = read_points_csv(thetas);
  if (t <= 0) t = model.k();
  if (!dump_dir.empty()) fs::create_directories(dump_dir);

  std::string csv = "eps2";
  for (Index j = 0; j < t; ++j) csv += ",lambda_" + std::to_string(j + 1);
  csv += ",prior_dominated\n";
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const PredictiveSubspace pred = predict(model, targets[i], t);
    csv += num(pred.noise_variance);
    for (Index j = 0; j < t; ++j) csv += "," + num(pred.principal_variances(j));
    csv += pred.prior_dominated ? ",1\n" : ",0\n";
    rows.push_back({{"theta", std::vector<double>(targets[i].data(), targets[i].data() + targets[i].size())},
                    {"eps2", pred.noise_variance},
                    {"lambda", std::vector<double>(pred.principal_variances.data(),
                                                   pred.principal_variances.data() + t)},
                    {"prior_dominated", pred.prior_dominated}});
    if (!dump_dir.empty()) {
      write_basis_csv(fs::path(dump_dir) / ("pred_" + std::to_string(i) + ".csv"), pred.mean());
    }
  }
  write_file(out_csv, format == "json" ? rows.dump(2) + "\n" : csv);
  out << targets.size() << " predictions written to " << out_csv << "\n";
  return kOk;
}

int cmd_tune(const std::string& data_dir, const std::string& out_kernel, const std::string& format,
             const KernelOverrides& ko, std::ostream& out) {
  Dataset data = read_dataset(data_dir);
  if (data.points.empty()) throw Error(ErrorKind::EmptySample, data_dir + ": no samples");
  const KernelSpec kernel = apply_overrides(default_kernel(data.points), ko);
  const GpsModel model = fit(std::move(data.points), std::move(data.bases), kernel);
  const TuneResult result = tune(model);
  if (format == "json") {
    out << to_json(result) << "\n";
  } else {
    for (Index j = 0; j < result.beta_star.size(); ++j) out << "beta_" << j + 1 << ",";
    out << "epsilon2\n";
    for (const auto& e : result.trace) {
      for (Index j = 0; j < e.beta.size(); ++j) out << num(e.beta(j)) << ",";
      out << num(e.error) << "\n";
    }
    out << "# beta_star=";
    for (Index j = 0; j < result.beta_star.size(); ++j) {
      out << (j > 0 ? "," : "") << num(result.beta_star(j));
    }
    out << " epsilon2=" << num(result.error) << " converged=" << (result.converged ? 1 : 0) << "\n";
  }
  if (!out_kernel.empty()) {
    write_file(out_kernel, kernel_to_json(kernel.with_lengthscales(result.beta_star)) + "\n");
  }
  return kOk;
}

int cmd_sample(const std::string& grid_csv, const std::string& out_dir, Index n, Index k,
               std::uint64_t seed, const KernelOverrides& ko, std::ostream& out) {
  const PointSet grid = read_points_csv(grid_csv);
  if (grid.empty()) throw Error(ErrorKind::EmptySample, grid_csv + ": empty grid");
  const KernelSpec kernel = apply_overrides(default_kernel(grid), ko);
  Rng rng(seed);
  const auto draws = sample_path(grid, kernel, n, k, rng);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    write_basis_csv(fs::path(out_dir) / ("sample_" + std::to_string(i) + ".csv"), draws[i]);
  }
  out << draws.size() << " samples written to " << out_dir << "\n";
  return kOk;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_csv,
                  std::optional<Index> nr, std::optional<std::uint64_t> seed, std::ostream& out) {
  BenchmarkConfig cfg = benchmark_config_from_json(read_file(config_path));
  if (nr) cfg.interp.neighbors = *nr;
  if (seed) {
    cfg.train_seed = *seed;
    cfg.test_seed = *seed + 1;
  }
  const BenchmarkReport report = run_benchmark(cfg);
  write_file(out_csv, benchmark_csv(report));
  out << "beta=";
  for (Index j = 0; j < report.beta.size(); ++j) out << (j > 0 ? "," : "") << num(report.beta(j));
  out << " fit_ms=" << num(report.fit_ms) << "\n";
  for (const auto& m : cfg.methods) out << m << " mean_rel_l2_err=" << num(report.mean_error(m)) << "\n";
  std::size_t failures = 0;
  for (const auto& row : report.rows) failures += row.failure.empty() ? 0 : 1;
  if (failures > 0) out << failures << " rows failed (nan in the report)\n";
  return kOk;
}

int cmd_make_cylinder(const std::string& out_dir, Index l, std::ostream& out) {
  Dataset data;
  for (Index i = 0; i < l; ++i) {
    const double c = l == 1 ? 1.0 : 0.2 + 1.6 * static_cast<double>(i) / static_cast<double>(l - 1);
    const double theta = c * std::numbers::pi;
    Matrix x(2, 1);
    x << std::cos(theta), std::sin(theta);
    data.points.push_back(Vector::Constant(1, theta));
    data.bases.emplace_back(x);
  }
  write_dataset(out_dir, data);
  out << l << " samples written to " << out_dir << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian process subspace regression"};
  app.require_subcommand(1);

  KernelOverrides ko;
  std::string format = "csv";
  auto add_kernel_flags = [&](CLI::App* sub) {
    sub->add_option("--kernel", ko.path, "Kernel JSON file")->check(CLI::ExistingFile);
    sub->add_option("--beta", ko.beta, "Length-scale(s)");
    sub->add_option("--jitter", ko.jitter, "Diagonal jitter");
  };

  std::string data_dir, out_dir;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to points.csv + basis_<i>.csv");
  fit_cmd->add_option("data_dir", data_dir)->required();
  fit_cmd->add_option("out_dir", out_dir)->required();
  add_kernel_flags(fit_cmd);

  std::string model_dir, thetas, out_csv, dump_dir;
  Index t = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Predict subspaces at target parameters");
  predict_cmd->add_option("model_dir", model_dir)->required();
  predict_cmd->add_option("thetas_csv", thetas)->required();
  predict_cmd->add_option("out_csv", out_csv)->required();
  predict_cmd->add_option("--t", t, "Truncation (default k)");
  predict_cmd->add_option("--dump-bases", dump_dir, "Directory for the predicted mean bases");
  predict_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  add_kernel_flags(predict_cmd);

  std::string out_kernel;
  auto* tune_cmd = app.add_subcommand("tune", "Tune length-scales by leave-one-out error");
  tune_cmd->add_option("data_dir", data_dir)->required();
  tune_cmd->add_option("--out", out_kernel, "Write the tuned kernel JSON here");
  tune_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  add_kernel_flags(tune_cmd);

  std::string grid_csv;
  Index n = 0, k = 0;
  std::uint64_t seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Draw a random subspace path on a grid");
  sample_cmd->add_option("grid_csv", grid_csv)->required();
  sample_cmd->add_option("out_dir", out_dir)->required();
  sample_cmd->add_option("--n", n, "Ambient dimension")->required();
  sample_cmd->add_option("--k", k, "Subspace dimension")->required();
  sample_cmd->add_option("--seed", seed);
  add_kernel_flags(sample_cmd);

  std::string config_path;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run the reduced-order-model benchmark");
  bench_cmd->add_option("config_json", config_path)->required();
  bench_cmd->add_option("out_csv", out_csv)->required();
  std::optional<Index> nr;
  std::optional<std::uint64_t> bench_seed;
  bench_cmd->add_option("--nr", nr, "Interpolation neighbor count");
  bench_cmd->add_option("--seed", bench_seed, "Seed for the training and test designs");

  Index count = 7;
  auto* cyl_cmd = app.add_subcommand("make-cylinder", "Write the unit-circle example dataset");
  cyl_cmd->add_option("out_dir", out_dir)->required();
  cyl_cmd->add_option("--l", count, "Number of samples");

  std::vector<const char*> argv{"gpsr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(data_dir, out_dir, ko, out);
    if (predict_cmd->parsed()) {
      return cmd_predict(model_dir, thetas, out_csv, t, dump_dir, format, ko, out);
    }
    if (tune_cmd->parsed()) return cmd_tune(data_dir, out_kernel, format, ko, out);
    if (sample_cmd->parsed()) return cmd_sample(grid_csv, out_dir, n, k, seed, ko, out);
    if (bench_cmd->parsed()) return cmd_benchmark(config_path, out_csv, nr, bench_seed, out);
    if (cyl_cmd->parsed()) return cmd_make_cylinder(out_dir, count, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace gpsr::cli
