#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "rdbd/core.hpp"

namespace rdbd {

/// A theoretical bound evaluated against an empirical quantity.
struct BoundReport {
  std::string name;
  double theoretical_value = 0.0;
  double empirical_value = 0.0;
  bool satisfied = false;
  bool applicable = true;
  double margin = 0.0; // positive when the bound holds with room to spare
};

/// Full-batch DBD iteration count 2 L f_gap / ((1 - gamma^2) eps^2).
double dbd_iteration_bound(const TheoryParams &p);

/// RDBD iteration count sigma sqrt(L f_gap) (1/(1-gamma) + (1+gamma)/2) / eps^2.
double rdbd_iteration_bound(const TheoryParams &p);

struct RdbdHyperparams {
  double alpha0 = 0.0;
  double eta = 0.0;
};

/**
 * Initial rate and meta rate that make the RDBD convergence argument go
 * through for a horizon of T steps:
 *   alpha0 = sqrt(f_gap) / (sigma sqrt(L T))
 *   eta    = gamma sqrt(f_gap) / (T sigma^3 sqrt(L T))
 */
RdbdHyperparams rdbd_theoretical_hyperparams(const TheoryParams &p, std::size_t T);

/// (alpha0 - t eta sigma^2, alpha0 + t eta sigma^2).
std::pair<double, double> alpha_envelope(double alpha0, double eta, double sigma, std::size_t t);

/**
 * Compares 2 / (2 alpha - alpha^2 L) against 2 L / (1 - gamma^2). Outside
 * 0 < alpha < 2/L the left side is undefined and the report is marked
 * inapplicable rather than failed.
 */
BoundReport descent_coefficient_bound(double alpha, double L, double gamma);

struct SteeperDescentConditions {
  bool eta_ok = false;   // eta <= 2 / (L sigma^2)
  bool alpha_ok = false; // alpha <= 2 mu / L
};

SteeperDescentConditions steeper_descent_conditions(const TheoryParams &p, double eta, double alpha);

/// d f(x_t) / d alpha_{t-1} = -<grad f(x_t), grad f(x_{t-1})>.
double dbd_hypergradient(const Vector &grad_now, const Vector &grad_prev);

/// Smallest |h| in a run; the empirical stand-in for the dot-product floor tau.
double measured_tau(std::span<const double> h_values);

} // namespace rdbd
