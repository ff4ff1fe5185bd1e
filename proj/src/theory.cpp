#include "rdbd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rdbd {

namespace {

void require_valid(const TheoryParams &p) {
  const auto errs = validate_theory_params(p);
  if (!errs.empty()) {
    std::string msg = "invalid theory parameters:";
    for (const auto &e : errs) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

} // namespace

double dbd_iteration_bound(const TheoryParams &p) {
  require_valid(p);
  return 2.0 * p.lipschitz_L * p.f_gap / ((1.0 - p.gamma * p.gamma) * p.epsilon * p.epsilon);
}

double rdbd_iteration_bound(const TheoryParams &p) {
  require_valid(p);
  if (!(p.gamma > 0.0)) {
    throw std::invalid_argument("rdbd_iteration_bound requires gamma in (0, 1)");
  }
  const double shape = 1.0 / (1.0 - p.gamma) + 0.5 * (1.0 + p.gamma);
  return p.sigma * std::sqrt(p.lipschitz_L * p.f_gap) * shape / (p.epsilon * p.epsilon);
}

RdbdHyperparams rdbd_theoretical_hyperparams(const TheoryParams &p, std::size_t T) {
  if (T == 0) {
    throw std::invalid_argument("horizon T must be positive");
  }
  require_valid(p);
  const double t = static_cast<double>(T);
  const double root_gap = std::sqrt(p.f_gap);
  const double root_LT = std::sqrt(p.lipschitz_L * t);
  RdbdHyperparams h;
  h.alpha0 = root_gap / (p.sigma * root_LT);
  h.eta = p.gamma * root_gap / (t * p.sigma * p.sigma * p.sigma * root_LT);
  return h;
}

std::pair<double, double> alpha_envelope(double alpha0, double eta, double sigma, std::size_t t) {
  const double width = static_cast<double>(t) * eta * sigma * sigma;
  return {alpha0 - width, alpha0 + width};
}

BoundReport descent_coefficient_bound(double alpha, double L, double gamma) {
  BoundReport r;
  r.name = "descent_coefficient";
  r.theoretical_value = 2.0 * L / (1.0 - gamma * gamma);
  if (!(alpha > 0.0 && alpha < 2.0 / L)) {
    r.applicable = false;
    r.empirical_value = std::numeric_limits<double>::quiet_NaN();
    r.margin = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.empirical_value = 2.0 / (2.0 * alpha - alpha * alpha * L);
  r.margin = r.theoretical_value - r.empirical_value;
  r.satisfied = r.empirical_value <= r.theoretical_value + 1e-12;
  return r;
}

SteeperDescentConditions steeper_descent_conditions(const TheoryParams &p, double eta, double alpha) {
  SteeperDescentConditions c;
  c.eta_ok = eta <= 2.0 / (p.lipschitz_L * p.sigma * p.sigma);
  c.alpha_ok = alpha <= 2.0 * p.mu / p.lipschitz_L;
  return c;
}

double dbd_hypergradient(const Vector &grad_now, const Vector &grad_prev) { return -dot(grad_now, grad_prev); }

double measured_tau(std::span<const double> h_values) {
  double tau = std::numeric_limits<double>::infinity();
  for (double h : h_values) tau = std::min(tau, std::abs(h));
  return tau;
}

} // namespace rdbd
