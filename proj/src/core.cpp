#include "rdbd/core.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace rdbd {

bool all_finite(const Vector &v) { return v.allFinite(); }

void require_same_size(const Vector &a, const Vector &b, const char *what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

double dot(const Vector &a, const Vector &b) {
  require_same_size(a, b, "dot");
  return a.dot(b);
}

ParamVector::ParamVector(std::string id, Vector values) : id_(std::move(id)), values_(std::move(values)) {
  if (values_.size() < 1) {
    throw DimensionError("ParamVector '" + id_ + "' must have length >= 1");
  }
  if (!all_finite(values_)) {
    throw NumericError("ParamVector '" + id_ + "' has non-finite entries");
  }
}

void ParamVector::assign(const Vector &values) {
  require_same_size(values_, values, "ParamVector::assign");
  if (!all_finite(values)) {
    throw NumericError("ParamVector '" + id_ + "' assigned non-finite entries");
  }
  values_ = values;
}

GradientEstimate::GradientEstimate(Vector values, std::size_t step)
    : values_(std::move(values)), step_(step), norm_(0.0) {
  if (!all_finite(values_)) {
    throw NumericError("gradient estimate at step " + std::to_string(step) + " has non-finite entries");
  }
  norm_ = values_.norm();
}

double ClampRange::apply(double alpha) const { return std::clamp(alpha, lo, hi); }

ScheduleState ScheduleState::fresh(std::size_t dim, double alpha0, double eta, ClampRange clamp) {
  if (!std::isfinite(alpha0) || !std::isfinite(eta)) {
    throw NumericError("alpha0 and eta must be finite");
  }
  if (eta < 0.0) {
    throw std::invalid_argument("eta must be >= 0");
  }
  if (clamp.lo > clamp.hi) {
    throw std::invalid_argument("alpha_min must not exceed alpha_max");
  }
  ScheduleState s;
  s.alpha = clamp.apply(alpha0);
  s.prev_update = Vector::Zero(static_cast<Eigen::Index>(dim));
  s.prev_dot = 0.0;
  s.eta = eta;
  s.clamp = clamp;
  s.step = 0;
  return s;
}

std::vector<std::string> validate_theory_params(const TheoryParams &p) {
  std::vector<std::string> out;
  const auto check = [&](bool ok, const char *msg) {
    if (!ok) out.emplace_back(msg);
  };
  check(std::isfinite(p.lipschitz_L) && p.lipschitz_L > 0.0, "lipschitz_L must be > 0");
  check(std::isfinite(p.sigma) && p.sigma > 0.0, "sigma must be > 0");
  check(std::isfinite(p.mu) && p.mu > 0.0, "mu must be > 0");
  check(std::isfinite(p.tau) && p.tau > 0.0, "tau must be > 0");
  check(std::isfinite(p.gamma) && p.gamma >= 0.0, "gamma must be >= 0");
  check(!(p.gamma >= 1.0), "gamma must be < 1");
  check(std::isfinite(p.epsilon) && p.epsilon > 0.0, "epsilon must be > 0");
  check(std::isfinite(p.f_gap) && p.f_gap >= 0.0, "f_gap must be >= 0");
  return out;
}

} // namespace rdbd
