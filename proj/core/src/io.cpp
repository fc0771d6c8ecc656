#include "gpsr/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gpsr/error.hpp"

namespace gpsr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Parse, "failed writing " + path.string());
}

void append_double(std::string& out, double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, end);
}

[[noreturn]] void malformed(const std::string& source, const std::string& what) {
  throw Error(ErrorKind::Parse, source + ": " + what);
}

Index parse_dim(std::string_view token, std::string_view key, const std::string& source) {
  if (token.substr(0, key.size()) != key) malformed(source, "malformed header");
  token.remove_prefix(key.size());
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || value < 0) {
    malformed(source, "malformed header");
  }
  return static_cast<Index>(value);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    malformed(source, e.what());
  }
}

}  // namespace

std::string format_matrix_csv(const Matrix& m, MatrixTag tag) {
  std::string out = tag == MatrixTag::Stiefel ? "# stiefel" : "# matrix";
  out += " n=" + std::to_string(m.rows()) + " k=" + std::to_string(m.cols()) + "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      append_double(out, m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const Matrix& m, MatrixTag tag) {
  write_text(path, format_matrix_csv(m, tag));
}

Matrix parse_matrix_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) malformed(source, "missing header");
  std::istringstream header(std::string(trim(line)));
  std::string hash, tag, ntok, ktok, extra;
  header >> hash >> tag >> ntok >> ktok;
  if (hash != "#" || (tag != "stiefel" && tag != "matrix") || (header >> extra)) {
    malformed(source, "malformed header '" + line + "'");
  }
  const Index rows = parse_dim(ntok, "n=", source);
  const Index cols = parse_dim(ktok, "k=", source);

  Matrix m(rows, cols);
  Index row = 0;
  while (std::getline(in, line)) {
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    if (row >= rows) malformed(source, "more rows than the header declares");
    Index col = 0;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view field = trim(rest.substr(0, comma));
      if (col >= cols) malformed(source, "row " + std::to_string(row + 1) + " has too many values");
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        malformed(source, "bad number '" + std::string(field) + "' in row " +
                              std::to_string(row + 1));
      }
      m(row, col++) = value;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (col != cols) malformed(source, "row " + std::to_string(row + 1) + " has too few values");
    ++row;
  }
  if (row != rows) malformed(source, "fewer rows than the header declares");
  return m;
}

Matrix read_matrix_csv(const fs::path& path) {
  return parse_matrix_csv(read_text(path), path.string());
}

void write_basis_csv(const fs::path& path, const StiefelBasis& basis) {
  write_matrix_csv(path, basis.matrix(), MatrixTag::Stiefel);
}

StiefelBasis read_basis_csv(const fs::path& path) {
  Matrix m = read_matrix_csv(path);
  try {
    return StiefelBasis(std::move(m));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

void write_points_csv(const fs::path& path, const PointSet& points) {
  const Index d = points.empty() ? 0 : points.front().size();
  Matrix m(static_cast<Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) m.row(static_cast<Index>(i)) = points[i];
  write_matrix_csv(path, m);
}

PointSet read_points_csv(const fs::path& path) {
  const Matrix m = read_matrix_csv(path);
  PointSet points;
  points.reserve(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) points.emplace_back(m.row(i).transpose());
  return points;
}

std::string kernel_to_json(const KernelSpec& spec) {
  json j;
  j["family"] = "se";
  j["lengthscales"] = std::vector<double>(spec.lengthscales.data(),
                                          spec.lengthscales.data() + spec.lengthscales.size());
  j["jitter"] = spec.jitter;
  return j.dump();
}

KernelSpec kernel_from_json(const std::string& text) {
  const json j = parse_json(text, "kernel");
  try {
    if (j.value("family", std::string("se")) != "se") {
      throw Error(ErrorKind::Parse, "kernel: unsupported family");
    }
    const auto beta = j.at("lengthscales").get<std::vector<double>>();
    KernelSpec spec = KernelSpec::squared_exponential(
        Eigen::Map<const Vector>(beta.data(), static_cast<Index>(beta.size())),
        j.value("jitter", kDefaultJitter));
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("kernel: ") + e.what());
  }
}

KernelSpec read_kernel_json(const fs::path& path) {
  try {
    return kernel_from_json(read_text(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

Dataset read_dataset(const fs::path& dir) {
  Dataset data;
  data.points = read_points_csv(dir / "points.csv");
  for (std::size_t i = 0;; ++i) {
    const fs::path file = dir / ("basis_" + std::to_string(i) + ".csv");
    if (!fs::exists(file)) break;
    data.bases.push_back(read_basis_csv(file));
  }
  if (data.bases.size() != data.points.size()) {
    throw Error(ErrorKind::ShapeMismatch, dir.string() + ": " +
                                              std::to_string(data.points.size()) +
                                              " points but " + std::to_string(data.bases.size()) +
                                              " basis files");
  }
  return data;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  write_points_csv(dir / "points.csv", data.points);
  for (std::size_t i = 0; i < data.bases.size(); ++i) {
    write_basis_csv(dir / ("basis_" + std::to_string(i) + ".csv"), data.bases[i]);
  }
}

void save_model(const fs::path& dir, const GpsModel& model) {
  write_dataset(dir, Dataset{model.points(), model.bases()});
  json manifest;
  manifest["format_version"] = kModelFormatVersion;
  manifest["n"] = model.n();
  manifest["k"] = model.k();
  manifest["l"] = model.l();
  manifest["r"] = model.rank();
  manifest["eta"] = kRankThreshold;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "kernel.json", kernel_to_json(model.kernel()) + "\n");
  write_matrix_csv(dir / "gram.csv", model.gram());
  write_matrix_csv(dir / "global_basis.csv", model.global_basis(), MatrixTag::Stiefel);
  write_matrix_csv(dir / "triangular.csv", model.triangular());
  Matrix pivot(static_cast<Index>(model.pivot().size()), 1);
  for (std::size_t j = 0; j < model.pivot().size(); ++j) {
    pivot(static_cast<Index>(j), 0) = static_cast<double>(model.pivot()[j]);
  }
  write_matrix_csv(dir / "pivot.csv", pivot);
}

GpsModel load_model(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  const json manifest = parse_json(read_text(manifest_path), manifest_path.string());
  Index n = 0, k = 0, l = 0, r = 0;
  try {
    if (manifest.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::Parse, manifest_path.string() + ": unsupported format_version");
    }
    n = manifest.at("n").get<Index>();
    k = manifest.at("k").get<Index>();
    l = manifest.at("l").get<Index>();
    r = manifest.at("r").get<Index>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  Dataset data = read_dataset(dir);
  if (data.bases.empty()) throw Error(ErrorKind::EmptySample, dir.string() + ": no bases");
  if (static_cast<Index>(data.points.size()) != l || data.bases.front().n() != n ||
      data.bases.front().k() != k) {
    throw Error(ErrorKind::ShapeMismatch, manifest_path.string() + ": manifest disagrees with data");
  }
  GpsFactors factors;
  factors.gram = read_matrix_csv(dir / "gram.csv");
  factors.global_basis = read_matrix_csv(dir / "global_basis.csv");
  factors.triangular = read_matrix_csv(dir / "triangular.csv");
  const Matrix pivot = read_matrix_csv(dir / "pivot.csv");
  if (pivot.cols() != 1) throw Error(ErrorKind::Parse, "pivot.csv must have one column");
  for (Index j = 0; j < pivot.rows(); ++j) {
    factors.pivot.push_back(static_cast<Index>(std::llround(pivot(j, 0))));
  }
  factors.rank = r;
  return GpsModel(std::move(data.points), std::move(data.bases),
                  read_kernel_json(dir / "kernel.json"), std::move(factors));
}

}  // namespace gpsr
