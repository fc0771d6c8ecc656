#include "gpsr/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/LU>

#include "gpsr/error.hpp"
#include "gpsr/model_selection.hpp"

namespace gpsr {

namespace {

Vector lagrange_weights(double x, const std::vector<double>& nodes) {
  const auto m = static_cast<Index>(nodes.size());
  Vector w(m);
  for (Index j = 0; j < m; ++j) {
    double value = 1.0;
    for (Index q = 0; q < m; ++q) {
      if (q == j) continue;
      const double gap = nodes[static_cast<std::size_t>(j)] - nodes[static_cast<std::size_t>(q)];
      if (gap == 0.0) throw Error(ErrorKind::InvalidArgument, "coincident interpolation nodes");
      value *= (x - nodes[static_cast<std::size_t>(q)]) / gap;
    }
    w(j) = value;
  }
  return w;
}

Vector multiquadric_weights(const Vector& target, const std::vector<Vector>& nodes,
                            std::optional<double> shape) {
  const auto m = static_cast<Index>(nodes.size());
  double c = 0.0;
  if (shape) {
    c = *shape;
  } else {
    for (Index j = 0; j < m; ++j) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Index q = 0; q < m; ++q) {
        if (q != j) nearest = std::min(nearest, (nodes[j] - nodes[q]).norm());
      }
      c += nearest;
    }
    c /= static_cast<double>(m);
  }
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw Error(ErrorKind::InvalidArgument, "multiquadric shape must be positive");
  }
  const auto phi = [c](double r) { return std::sqrt(r * r + c * c); };
  Matrix gram(m, m);
  Vector rhs(m);
  for (Index j = 0; j < m; ++j) {
    rhs(j) = phi((target - nodes[j]).norm());
    for (Index q = 0; q < m; ++q) gram(j, q) = phi((nodes[j] - nodes[q]).norm());
  }
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) throw Error(ErrorKind::InvalidArgument, "singular RBF system");
  return lu.solve(rhs);
}

}  // namespace

NeighborSelection select_neighbors(const ParameterPoint& target, const PointSet& points,
                                   Index count) {
  const auto l = static_cast<Index>(points.size());
  if (count < 1 || count > l) {
    std::ostringstream msg;
    msg << "need 1 <= n_r <= " << l << ", got " << count;
    throw Error(ErrorKind::InsufficientNeighbors, msg.str());
  }
  const Vector scale = parameter_ranges(points);
  if (target.size() != scale.size()) throw Error(ErrorKind::DimensionMismatch, "target dimension");
  std::vector<double> dist(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) {
    dist[static_cast<std::size_t>(i)] =
        (target - points[static_cast<std::size_t>(i)]).cwiseQuotient(scale).norm();
  }
  std::vector<Index> order(static_cast<std::size_t>(l));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(count));
  return NeighborSelection{order.front(), order};
}

StiefelBasis subspace_interpolate(const ParameterPoint& target, const PointSet& points,
                                  const std::vector<StiefelBasis>& bases,
                                  const InterpConfig& config) {
  if (points.size() != bases.size()) {
    throw Error(ErrorKind::ShapeMismatch, "one basis per parameter point");
  }
  if (config.neighbors < 2) {
    throw Error(ErrorKind::InsufficientNeighbors, "interpolation needs at least two neighbors");
  }
  const NeighborSelection sel = select_neighbors(target, points, config.neighbors);
  const StiefelBasis& ref = bases[static_cast<std::size_t>(sel.reference)];
  const Vector scale = parameter_ranges(points);

  Vector weights;
  if (config.scheme == InterpScheme::Lagrange1D) {
    if (target.size() != 1) {
      throw Error(ErrorKind::DimensionMismatch, "Lagrange interpolation needs 1-d parameters");
    }
    std::vector<double> nodes;
    for (Index j : sel.indices) nodes.push_back(points[static_cast<std::size_t>(j)](0));
    weights = lagrange_weights(target(0), nodes);
  } else {
    std::vector<Vector> nodes;
    for (Index j : sel.indices) {
      nodes.push_back(points[static_cast<std::size_t>(j)].cwiseQuotient(scale));
    }
    weights = multiquadric_weights(target.cwiseQuotient(scale), nodes, config.rbf_shape);
  }

  Matrix delta = Matrix::Zero(ref.n(), ref.k());
  for (std::size_t j = 0; j < sel.indices.size(); ++j) {
    const Index idx = sel.indices[j];
    if (idx == sel.reference) continue;
    delta += weights(static_cast<Index>(j)) *
             grassmann_log(ref, bases[static_cast<std::size_t>(idx)]).delta();
  }
  delta -= ref.matrix() * (ref.matrix().transpose() * delta);
  return grassmann_exp(ref, TangentVector(ref, std::move(delta)));
}

}  // namespace gpsr
