#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gpsr/gps.hpp"

namespace gpsr {

inline constexpr int kModelFormatVersion = 1;

/// CSV matrices carry a one-line header: `# stiefel n=<rows> k=<cols>` for
/// orthonormal bases, `# matrix n=<rows> k=<cols>` for everything else.
/// Values are written in shortest round-trip form.
enum class MatrixTag { Stiefel, General };

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      MatrixTag tag = MatrixTag::General);
std::string format_matrix_csv(const Matrix& m, MatrixTag tag = MatrixTag::General);

/// Accepts either header. Throws Parse naming the file on malformed input.
Matrix read_matrix_csv(const std::filesystem::path& path);
Matrix parse_matrix_csv(const std::string& text, const std::string& source = "<string>");

void write_basis_csv(const std::filesystem::path& path, const StiefelBasis& basis);
StiefelBasis read_basis_csv(const std::filesystem::path& path);

/// One point per row.
void write_points_csv(const std::filesystem::path& path, const PointSet& points);
PointSet read_points_csv(const std::filesystem::path& path);

std::string kernel_to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const std::string& text);
KernelSpec read_kernel_json(const std::filesystem::path& path);

/// A directory holding points.csv and basis_0.csv ... basis_<l-1>.csv.
struct Dataset {
  PointSet points;
  std::vector<StiefelBasis> bases;
};

Dataset read_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

/// Model directory: manifest.json, kernel.json, points.csv, basis_<i>.csv,
/// gram.csv, global_basis.csv, triangular.csv, pivot.csv.
void save_model(const std::filesystem::path& dir, const GpsModel& model);
GpsModel load_model(const std::filesystem::path& dir);

}  // namespace gpsr
