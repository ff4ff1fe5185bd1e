#include "rdbd/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace rdbd {

AdamState AdamState::fresh(std::size_t dim, double beta1, double beta2, double eps_hat) {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(eps_hat > 0.0)) {
    throw std::invalid_argument("eps_hat must be > 0");
  }
  AdamState s;
  s.m = Vector::Zero(static_cast<Eigen::Index>(dim));
  s.v = Vector::Zero(static_cast<Eigen::Index>(dim));
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps_hat = eps_hat;
  return s;
}

Vector sgd_step(const ParamVector &x, const GradientEstimate &g, double alpha) {
  return plain_step(x, g, alpha);
}

Vector adam_direction(AdamState &state, const GradientEstimate &g) {
  require_same_size(state.m, g.values(), "adam state");
  if (!(state.eps_hat > 0.0)) {
    throw std::invalid_argument("eps_hat must be > 0");
  }
  const Vector &grad = g.values();
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  ++state.step;

  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const Vector mhat = state.m / c1;
  const Vector vhat = state.v / c2;
  return mhat.array() / (vhat.array().sqrt() + state.eps_hat);
}

AdamResult adam_step(AdamState &state, const ParamVector &x, const GradientEstimate &g, double alpha) {
  require_same_size(x.values(), g.values(), "adam_step");
  AdamResult r;
  r.direction = adam_direction(state, g);
  r.new_values = x.values() - alpha * r.direction;
  return r;
}

StepOutcome adam_rdbd_step(AdamState &adam, ScheduleState &sched, const ParamVector &x,
                           const GradientEstimate &g) {
  require_same_size(x.values(), g.values(), "adam_rdbd_step");
  GradientEstimate u(adam_direction(adam, g), g.step());
  return rdbd_step(sched, x, u);
}

} // namespace rdbd
