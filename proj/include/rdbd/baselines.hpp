#pragma once

#include "rdbd/core.hpp"
#include "rdbd/schedulers.hpp"

namespace rdbd {

/// Adam moments for one ParamVector.
struct AdamState {
  Vector m;
  Vector v;
  double beta1 = 0.05;
  double beta2 = 0.99;
  double eps_hat = 1e-8;
  std::size_t step = 0;

  static AdamState fresh(std::size_t dim, double beta1 = 0.05, double beta2 = 0.99, double eps_hat = 1e-8);
};

struct AdamResult {
  Vector new_values;
  Vector direction; // u_t = mhat / (sqrt(vhat) + eps_hat)
};

/// Unscheduled SGD; same contract as plain_step.
Vector sgd_step(const ParamVector &x, const GradientEstimate &g, double alpha);

/// Bias-corrected Adam step at rate alpha. Advances `state`.
AdamResult adam_step(AdamState &state, const ParamVector &x, const GradientEstimate &g, double alpha);

/// Adam moment update only; returns u_t without moving the weights.
Vector adam_direction(AdamState &state, const GradientEstimate &g);

/**
 * Adam with its rate scheduled per vector by RDBD: the Adam direction u_t
 * plays the role of the weight update g_t, both for h_t and for descent.
 */
StepOutcome adam_rdbd_step(AdamState &adam, ScheduleState &sched, const ParamVector &x,
                           const GradientEstimate &g);

} // namespace rdbd
