#include "gpsr/kernel.hpp"

#include <cmath>
#include <sstream>

#include "gpsr/error.hpp"

namespace gpsr {

namespace {

void require_dims(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << "parameter points have dimensions " << a.size() << " and " << b.size();
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
  if (!spec.shared() && spec.lengthscales.size() != a.size()) {
    std::ostringstream msg;
    msg << spec.lengthscales.size() << " length-scales for " << a.size() << "-d points";
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

void check_values(const KernelSpec& spec) {
  if (spec.lengthscales.size() == 0) throw Error(ErrorKind::InvalidArgument, "no length-scales");
  for (Index i = 0; i < spec.lengthscales.size(); ++i) {
    if (!(spec.lengthscales(i) > 0.0) || !std::isfinite(spec.lengthscales(i))) {
      throw Error(ErrorKind::InvalidArgument, "length-scales must be positive and finite");
    }
  }
  if (!(spec.jitter >= 0.0 && spec.jitter <= kMaxJitter)) {
    throw Error(ErrorKind::InvalidArgument, "jitter must lie in [0, 1e-6]");
  }
}

}  // namespace

KernelSpec KernelSpec::squared_exponential(Vector lengthscales, double jitter) {
  KernelSpec spec;
  spec.lengthscales = std::move(lengthscales);
  spec.jitter = jitter;
  check_values(spec);
  return spec;
}

void KernelSpec::validate(Index d) const {
  check_values(*this);
  if (!shared() && lengthscales.size() != d) {
    std::ostringstream msg;
    msg << lengthscales.size() << " length-scales for " << d << "-d parameters";
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

KernelSpec KernelSpec::with_lengthscales(Vector beta) const {
  KernelSpec out = *this;
  out.lengthscales = std::move(beta);
  check_values(out);
  return out;
}

double kernel_eval(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b) {
  require_dims(spec, a, b);
  double exponent = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double z = (a(i) - b(i)) / spec.lengthscale(i);
    exponent += z * z;
  }
  return std::exp(-0.5 * exponent);
}

double scaled_distance(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b) {
  require_dims(spec, a, b);
  double sum = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double z = (a(i) - b(i)) / spec.lengthscale(i);
    sum += z * z;
  }
  return std::sqrt(sum);
}

Matrix corr_matrix(const KernelSpec& spec, const PointSet& points) {
  const auto l = static_cast<Index>(points.size());
  Matrix k(l, l);
  for (Index j = 0; j < l; ++j) {
    k(j, j) = 1.0 + spec.jitter;
    for (Index i = j + 1; i < l; ++i) {
      k(i, j) = kernel_eval(spec, points[i], points[j]);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

Vector corr_vector(const KernelSpec& spec, const PointSet& points, const ParameterPoint& target) {
  Vector k(static_cast<Index>(points.size()));
  for (Index i = 0; i < k.size(); ++i) k(i) = kernel_eval(spec, target, points[i]);
  return k;
}

Vector kernel_grad(const KernelSpec& spec, const ParameterPoint& a, const ParameterPoint& b) {
  const double value = kernel_eval(spec, a, b);
  Vector grad = Vector::Zero(spec.hyperparameter_count());
  for (Index i = 0; i < a.size(); ++i) {
    const double beta = spec.lengthscale(i);
    const double diff = a(i) - b(i);
    grad(spec.shared() ? 0 : i) += diff * diff / (beta * beta * beta) * value;
  }
  return grad;
}

std::vector<Matrix> corr_matrix_grad(const KernelSpec& spec, const PointSet& points) {
  const auto l = static_cast<Index>(points.size());
  std::vector<Matrix> grads(static_cast<std::size_t>(spec.hyperparameter_count()),
                            Matrix::Zero(l, l));
  for (Index j = 0; j < l; ++j) {
    for (Index i = j + 1; i < l; ++i) {
      const Vector g = kernel_grad(spec, points[i], points[j]);
      for (Index h = 0; h < g.size(); ++h) {
        grads[static_cast<std::size_t>(h)](i, j) = g(h);
        grads[static_cast<std::size_t>(h)](j, i) = g(h);
      }
    }
  }
  return grads;
}

}  // namespace gpsr
