#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpsr/gps.hpp"

namespace gpsr {

/// Leave-one-out predictive error at one set of length-scales.
struct LoocvReport {
  double total_error = 0.0;  // sum of per_point
  Vector per_point;          // squared Riemannian distance per held-out point
  std::optional<Vector> gradient;
  Vector beta;
  /// Folds evaluated by refitting because their kernel weights vanish.
  std::vector<Index> refit_folds;
};

struct TuneEvaluation {
  Vector beta;
  double error = 0.0;
};

struct TuneResult {
  Vector beta_star;
  double error = 0.0;
  std::vector<TuneEvaluation> trace;
  bool converged = false;
};

struct TuneBounds {
  Vector lower;
  Vector upper;
};

enum class GradientMode {
  Approximate,  // truncated pseudo-inverse with tau eigenpairs
  Exact,        // full pseudo-inverse
};

inline constexpr double kTuneTolerance = 0.01;
inline constexpr double kSpectralGapTolerance = 1e-12;

/// beta_i = 3 d^{3/2} / l * range_i
Vector rule_of_thumb(Index d, Index l, const Vector& ranges);

/// max - min of each coordinate (1 where the points do not vary).
Vector parameter_ranges(const PointSet& points);

/// rule_of_thumb +- 30%, one entry per hyperparameter of the model's kernel.
TuneBounds default_bounds(const GpsModel& model);

LoocvReport loocv_error(const GpsModel& model, const Vector& beta);

/// d eps_2 / d beta. tau = 0 selects 2k. The truncated mode is only accurate
/// when the spectrum of S_{-i} decays quickly past tau; on generic data the
/// relative error can be tens of percent. Exact mode costs the same here
/// because the full eigendecomposition is already available.
Vector loocv_gradient(const GpsModel& model, const Vector& beta, Index tau = 0,
                      GradientMode mode = GradientMode::Approximate);

/// loocv_error with the gradient filled in.
LoocvReport loocv_error_and_gradient(const GpsModel& model, const Vector& beta, Index tau = 0,
                                     GradientMode mode = GradientMode::Approximate);

/// Golden-section search on log beta for a single length-scale, projected
/// gradient descent with backtracking otherwise. Returns the best evaluated
/// point; init is kept unless something strictly better is found.
TuneResult tune(const GpsModel& model, const TuneBounds& bounds, const Vector& init,
                int max_iters = 100);
TuneResult tune(const GpsModel& model);

double log_modified_marginal_likelihood(const GpsModel& model, const Vector& beta);

/// sum_i log p_MACG(X_i; Sigma_{-i}) with Sigma_{-i} the leave-one-out
/// predictive covariance.
double loocv_log_density(const GpsModel& model, const Vector& beta);

std::string to_json(const LoocvReport& report);
std::string to_json(const TuneResult& result);

}  // namespace gpsr
