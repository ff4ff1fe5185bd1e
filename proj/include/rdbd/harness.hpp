#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rdbd/core.hpp"
#include "rdbd/problems.hpp"
#include "rdbd/theory.hpp"

namespace rdbd {

/// Invalid run configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class OptimizerKind { Sgd, Adam, Dbd, Rdbd, AdamRdbd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

/// Which problem a run trains and how to build it.
struct ProblemSpec {
  std::string kind = "logistic"; // quadratic | rosenbrock | logistic | mlp-blobs | mlp-mnist
  std::size_t n_samples = 2048;
  std::size_t dim = 20;
  int num_classes = 10; // mlp-blobs only
  double separation = 2.0;
  std::vector<double> quad_diag = {1.0, 2.0}; // quadratic: A = diag(...), b = 0
  std::vector<double> x0;                     // quadratic start; empty = ones
  std::vector<std::size_t> hidden = {128, 64};
  std::string mnist_dir; // empty = $MNIST_DIR
  std::size_t subset = 2048;

  bool operator==(const ProblemSpec &) const = default;
};

struct RunConfig {
  std::string label; // defaults to the optimizer name
  ProblemSpec problem;
  OptimizerKind optimizer = OptimizerKind::Rdbd;
  double alpha0 = 0.005;
  double eta = 0.01;
  std::size_t batch_size = 16;
  std::size_t steps = 2000;
  std::uint64_t seed = 1;
  bool clamp = true;
  double alpha_min = 0.0;
  std::optional<double> alpha_max; // unset: +inf, or 10 * alpha0 for Adam+RDBD
  double beta1 = 0.05;
  double beta2 = 0.99;
  double eps_hat = 1e-8;
  std::size_t eval_every = 25;
  double loss_threshold = 0.5;
  bool timing = true; // false writes wall_ms = 0 so traces are byte-stable
  std::string out;

  std::string display_label() const;
};

/// Throws ConfigError on the first violated constraint.
void validate(const RunConfig &cfg);
ClampRange effective_clamp(const RunConfig &cfg);

/// Applies one `key = value` setting; throws ConfigError on unknown keys or bad values.
void apply_setting(RunConfig &cfg, std::string_view key, std::string_view value);
/// Parses flat `key = value` text ('#' starts a comment) on top of `base`.
RunConfig parse_config_text(std::string_view text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path &path, RunConfig base = {});

/// Builds the problem for `cfg`; throws DataMissing when MNIST is required but absent.
std::unique_ptr<Problem> build_problem(const RunConfig &cfg);

struct VectorRecord {
  double grad_norm = 0.0; // norm of the update direction g_t fed to the schedule
  double alpha = 0.0;
  double h = 0.0;
  bool reverted = false;
};

/// One optimisation step. `full_loss`/`full_grad_norm` are NaN between evaluations.
struct TraceRecord {
  std::size_t step = 0;
  double loss = 0.0; // mini-batch loss at the pre-step weights
  double full_loss = 0.0;
  double full_grad_norm = 0.0;
  std::vector<VectorRecord> vectors;
  double wall_ms = 0.0;
};

struct Trace {
  std::string run_id;
  RunConfig config;
  std::vector<std::string> vector_ids;
  double initial_full_loss = 0.0;
  double initial_full_grad_norm = 0.0;
  std::vector<TraceRecord> records;

  double final_full_loss() const;
  double min_full_grad_norm() const;
  /// First step whose full loss is <= threshold, or +inf.
  double steps_to_threshold(double threshold) const;
  std::size_t revert_count() const;
};

/// Raised when a run produces a non-finite loss; carries the partial trace (exit code 4).
class NumericFailure : public std::runtime_error {
public:
  NumericFailure(const std::string &what, Trace partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const Trace &partial() const { return partial_; }

private:
  Trace partial_;
};

Trace run(const RunConfig &cfg);
Trace run_on(const Problem &problem, const RunConfig &cfg);

/// Trace CSV: step,loss,full_loss,full_grad_norm, then grad_norm/alpha/h/reverted per vector, then wall_ms.
void write_trace_csv(const Trace &trace, std::ostream &out);
void write_trace_csv(const Trace &trace, const std::filesystem::path &path);

enum class Metric { FinalLoss, StepsToThreshold, MinGradNorm };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);
double metric_value(const Trace &trace, Metric m);

struct ComparisonRow {
  std::string label;
  std::vector<double> values; // one per seed, seed-ascending
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

struct ComparisonTable {
  Metric metric = Metric::FinalLoss;
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonRow> rows;
  std::string winner; // lowest median
};

/// Linear-interpolated quantile of `values` (q in [0, 1]).
double quantile(std::vector<double> values, double q);

/**
 * Runs every config and summarises `metric` per label over seeds. All
 * configs must share one problem and each label must cover the same seed
 * set; otherwise ConfigError.
 */
ComparisonTable compare(const std::vector<RunConfig> &configs, Metric metric,
                        std::vector<Trace> *traces_out = nullptr);
ComparisonTable summarize(const std::vector<Trace> &traces, Metric metric);

void write_comparison_csv(const ComparisonTable &table, std::ostream &out);
std::string format_comparison(const ComparisonTable &table);

/// Long-format plot data: run_id,step,series,value.
struct PlotRow {
  std::string run_id;
  std::size_t step = 0;
  std::string series;
  double value = 0.0;
};

/**
 * Writes every series of every trace (or only those named in `series`;
 * "alpha" selects every alpha:<vector> series). Series with no finite
 * value are dropped. Returns the number of data rows written.
 */
std::size_t emit_plot_data(const std::vector<Trace> &traces, const std::filesystem::path &out_path,
                           const std::vector<std::string> &series = {});
std::vector<PlotRow> parse_plot_data(const std::filesystem::path &path);

struct SweepSpec {
  std::string param; // alpha0 | eta | batch_size
  std::vector<double> values;
};

struct Preset {
  std::string name;
  std::string description;
  RunConfig config;
  std::optional<SweepSpec> sweep;
  bool reserved = false; // named but not runnable in this build
};

const std::vector<Preset> &presets();
/// Throws ConfigError for unknown or reserved names.
const Preset &find_preset(std::string_view name);

std::vector<Trace> run_sweep(const RunConfig &base, const SweepSpec &sweep, const std::vector<std::uint64_t> &seeds);

// ------------------------------------------------------------------ run checks

/// |alpha_t - alpha0| <= t * eta * (max_{s<=t} ||g_s||)^2 + slack, per vector and step.
BoundReport check_alpha_envelope(const Trace &trace, double slack = 1e-10);

/// Every flagged revert has h_t * h_{t-1} < 0 in the recorded values.
BoundReport check_revert_consistency(const Trace &trace);

struct DbdConvergenceResult {
  BoundReport report;     // theoretical = allowed iterations, empirical = first t with ||grad|| <= eps
  double sigma = 0.0;     // bound used to set eta
  double observed_sigma = 0.0;
  double min_grad_norm = 0.0;
  std::size_t horizon = 0;
};

/**
 * Full-batch DBD with alpha0 = 1/L and eta = gamma / (T sigma^2 L), where
 * T = ceil(dbd_iteration_bound) and sigma = sqrt(2 L f_gap) bounds the
 * gradient norm on the initial sublevel set of the quadratic.
 */
DbdConvergenceResult check_dbd_convergence(const QuadraticProblem &problem, const Vector &x0, double gamma,
                                           double epsilon);

struct SteeperDescentResult {
  BoundReport report; // empirical = worst f(x_rdbd) - f(x_plain) over checked steps
  std::size_t steps_checked = 0;
  std::size_t steps_skipped = 0;
  double observed_sigma = 0.0;
  bool eta_condition = false;
};

/**
 * Full-batch RDBD on a quadratic. Compares the scheduled step
 * x - (alpha + eta h_t) g_t against the plain step x - alpha g_t from the same
 * point, at every step whose increment is not regretted: the next update
 * grad f(x - alpha g_t) has <grad f, g_t> * h_t >= 0. Other steps are skipped.
 * alpha is the rate after any revert at step t; the trajectory itself follows
 * rdbd_step, revert corrections included.
 */
SteeperDescentResult check_steeper_descent(const QuadraticProblem &problem, const Vector &x0, double alpha0,
                                           double eta, std::size_t steps);

} // namespace rdbd
