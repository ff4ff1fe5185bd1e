#include "rdbd/schedulers.hpp"

#include <algorithm>
#include <cmath>

namespace rdbd {

namespace {

void check_inputs(const ScheduleState &state, const ParamVector &x, const GradientEstimate &g) {
  require_same_size(x.values(), g.values(), "scheduler step");
  require_same_size(state.prev_update, g.values(), "scheduler state");
}

// Shared tail of DBD and RDBD: increment alpha, descend, advance state.
StepOutcome increment_and_descend(ScheduleState &state, const Vector &x, const GradientEstimate &g,
                                  double h, bool reverted) {
  StepOutcome out;
  out.h = h;
  out.reverted = reverted;
  out.new_alpha = state.clamp.apply(state.alpha + state.eta * h);
  out.new_values = x - out.new_alpha * g.values();

  state.alpha = out.new_alpha;
  state.prev_update = g.values();
  state.prev_dot = h;
  ++state.step;
  return out;
}

} // namespace

std::string_view to_string(SchedulerKind kind) {
  switch (kind) {
  case SchedulerKind::Plain:
    return "plain";
  case SchedulerKind::Dbd:
    return "dbd";
  case SchedulerKind::Rdbd:
    return "rdbd";
  }
  return "?";
}

Vector plain_step(const ParamVector &x, const GradientEstimate &g, double alpha) {
  require_same_size(x.values(), g.values(), "plain_step");
  return x.values() - alpha * g.values();
}

StepOutcome dbd_step(ScheduleState &state, const ParamVector &x, const GradientEstimate &g) {
  check_inputs(state, x, g);
  const double h = g.values().dot(state.prev_update);
  return increment_and_descend(state, x.values(), g, h, false);
}

RevertCorrection revert_correction(double eta, double h_prev, const Vector &g_prev) {
  return {(eta * h_prev) * g_prev, -eta * h_prev};
}

StepOutcome rdbd_step(ScheduleState &state, const ParamVector &x, const GradientEstimate &g) {
  check_inputs(state, x, g);
  const double h = g.values().dot(state.prev_update);

  // Strict: a zero product never reverts.
  if (h * state.prev_dot < 0.0) {
    const RevertCorrection c = revert_correction(state.eta, state.prev_dot, state.prev_update);
    const Vector corrected = x.values() + c.dx;
    state.alpha += c.dalpha;
    return increment_and_descend(state, corrected, g, h, true);
  }
  return increment_and_descend(state, x.values(), g, h, false);
}

StepOutcome scheduled_step(SchedulerKind kind, ScheduleState &state, const ParamVector &x,
                           const GradientEstimate &g) {
  switch (kind) {
  case SchedulerKind::Dbd:
    return dbd_step(state, x, g);
  case SchedulerKind::Rdbd:
    return rdbd_step(state, x, g);
  case SchedulerKind::Plain:
    break;
  }
  check_inputs(state, x, g);
  StepOutcome out;
  out.h = g.values().dot(state.prev_update);
  out.new_alpha = state.alpha;
  out.new_values = plain_step(x, g, state.alpha);
  state.prev_update = g.values();
  state.prev_dot = out.h;
  ++state.step;
  return out;
}

bool revert_exactness_check(const WeightsAndRate &before, const WeightsAndRate &after, double eta,
                            double h_prev, const Vector &g_prev) {
  constexpr double tol = 1e-12;
  if (before.x.size() != after.x.size() || before.x.size() != g_prev.size()) {
    return false;
  }
  const double increment = eta * h_prev;
  const double alpha_scale = std::max({std::abs(before.alpha), std::abs(increment), 1e-300});
  if (std::abs(after.alpha - before.alpha) > tol * alpha_scale) {
    return false;
  }

  // The increment displaced x by -increment*g_prev; the correction must cancel it.
  const Vector displaced = before.x - increment * g_prev;
  const Vector correction = after.x - displaced;
  const Vector expected = increment * g_prev;
  for (Eigen::Index i = 0; i < g_prev.size(); ++i) {
    const double scale =
        std::max({std::abs(before.x[i]), std::abs(expected[i]), 1e-300});
    if (std::abs(correction[i] - expected[i]) > tol * scale) {
      return false;
    }
    if (std::abs(after.x[i] - before.x[i]) > tol * scale) {
      return false;
    }
  }
  return true;
}

} // namespace rdbd
