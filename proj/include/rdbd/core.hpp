#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rdbd {

using Vector = Eigen::VectorXd;

/// Raised when two vectors that must agree in length do not.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value that must be finite is NaN or infinite.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Vector &v);

/// Inner product; throws DimensionError on length mismatch.
double dot(const Vector &a, const Vector &b);

void require_same_size(const Vector &a, const Vector &b, const char *what);

/**
 * One schedulable weight vector. Each ParamVector owns its own learning
 * rate in the schedulers; a model is a list of these (one per weight
 * matrix, one per bias).
 */
class ParamVector {
public:
  ParamVector(std::string id, Vector values);

  const std::string &id() const { return id_; }
  const Vector &values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  /// Replaces the values; the length must not change.
  void assign(const Vector &values);

private:
  std::string id_;
  Vector values_;
};

/// A stochastic update direction g_t with its cached Euclidean norm.
class GradientEstimate {
public:
  GradientEstimate(Vector values, std::size_t step = 0);

  const Vector &values() const { return values_; }
  std::size_t step() const { return step_; }
  double norm() const { return norm_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

private:
  Vector values_;
  std::size_t step_;
  double norm_;
};

/// Admissible range for a scheduled learning rate.
struct ClampRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  static ClampRange disabled() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  double apply(double alpha) const;
};

/**
 * Per-vector scheduler state for DBD/RDBD.
 *
 * `prev_update` is g_{t-1} and `prev_dot` is h_{t-1} = <g_{t-1}, g_{t-2}>.
 * Both start at zero, so the first two steps can never trigger a revert.
 */
struct ScheduleState {
  double alpha = 0.0;
  Vector prev_update;
  double prev_dot = 0.0;
  double eta = 0.0;
  ClampRange clamp;
  std::size_t step = 0;

  static ScheduleState fresh(std::size_t dim, double alpha0, double eta, ClampRange clamp = {});
};

/// Result of one scheduled step on one vector.
struct StepOutcome {
  Vector new_values;
  double new_alpha = 0.0;
  bool reverted = false;
  double h = 0.0;
};

/**
 * Constants appearing in the convergence bounds: smoothness L, update-norm
 * bound sigma, alignment mu, dot-product floor tau, the schedule scalar gamma,
 * target gradient norm epsilon and the gap f(x0) - f*.
 */
struct TheoryParams {
  double lipschitz_L = 1.0;
  double sigma = 1.0;
  double mu = 1.0;
  double tau = 1.0;
  double gamma = 0.5;
  double epsilon = 1.0;
  double f_gap = 1.0;
};

/// Returns one message per violated range constraint; empty means valid.
std::vector<std::string> validate_theory_params(const TheoryParams &p);

} // namespace rdbd
