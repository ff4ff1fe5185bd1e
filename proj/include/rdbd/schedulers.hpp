#pragma once

#include <string_view>

#include "rdbd/core.hpp"

namespace rdbd {

enum class SchedulerKind { Plain, Dbd, Rdbd };

std::string_view to_string(SchedulerKind kind);

/// x - alpha * g.
Vector plain_step(const ParamVector &x, const GradientEstimate &g, double alpha);

/**
 * Delta-bar-delta step.
 *
 * h_t = <g_t, g_{t-1}>, alpha_t = clamp(alpha_{t-1} + eta * h_t) and the
 * weights move by -alpha_t * g_t. Advances `state`.
 */
StepOutcome dbd_step(ScheduleState &state, const ParamVector &x, const GradientEstimate &g);

/**
 * Regrettable delta-bar-delta step.
 *
 * Identical to dbd_step unless h_t * h_{t-1} < 0. In that case the previous
 * step's learning-rate increment eta * h_{t-1} is removed from alpha and its
 * weight displacement is undone (x += eta * h_{t-1} * g_{t-1}) before the
 * usual increment and descent are applied. `g` must have been computed at
 * the current, uncorrected weights.
 */
StepOutcome rdbd_step(ScheduleState &state, const ParamVector &x, const GradientEstimate &g);

/// Dispatches on `kind`; Plain leaves alpha untouched.
StepOutcome scheduled_step(SchedulerKind kind, ScheduleState &state, const ParamVector &x,
                           const GradientEstimate &g);

/// The two corrections applied by a revert.
struct RevertCorrection {
  Vector dx;     // +eta * h_prev * g_prev
  double dalpha; // -eta * h_prev
};

RevertCorrection revert_correction(double eta, double h_prev, const Vector &g_prev);

struct WeightsAndRate {
  Vector x;
  double alpha = 0.0;
};

/**
 * Checks the revert contract on a recorded (before, after) pair.
 *
 * `before` holds (x, alpha) just before an increment eta*h_prev was applied;
 * `after` holds them after that increment and a subsequent revert. Passes
 * iff alpha is restored and the weight correction equals +eta*h_prev*g_prev,
 * both to 1e-12 relative to the magnitudes involved.
 */
bool revert_exactness_check(const WeightsAndRate &before, const WeightsAndRate &after, double eta,
                            double h_prev, const Vector &g_prev);

} // namespace rdbd
