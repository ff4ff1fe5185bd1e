#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdbd/core.hpp"
#include "rdbd/data.hpp"

namespace rdbd {

/// A named contiguous slice of the flat parameter vector; one ParamVector each.
struct ParamBlock {
  std::string id;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Constants known analytically for a problem (a subset of TheoryParams).
struct KnownConstants {
  std::optional<double> lipschitz_L;
  std::optional<double> f_star;
  std::optional<Vector> minimizer;
};

/**
 * A loss over a flat parameter vector, with full and mini-batch gradients.
 *
 * Finite-sum problems average per-sample losses over `num_samples()` rows;
 * deterministic problems report a single sample and ignore the batch.
 */
class Problem {
public:
  virtual ~Problem() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_samples() const { return 1; }
  virtual bool stochastic() const { return num_samples() > 1; }

  virtual double loss(const Vector &x) const = 0;
  virtual Vector full_gradient(const Vector &x) const = 0;

  /// Mean loss and gradient over the rows in `batch`.
  virtual double batch_loss(const Vector &x, std::span<const std::size_t> batch) const;
  virtual Vector batch_gradient(const Vector &x, std::span<const std::size_t> batch) const;

  /// Loss and gradient together; the default calls the two separately.
  virtual double batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch,
                                         Vector &grad) const;

  virtual std::vector<ParamBlock> blocks() const { return {{"x", 0, dim()}}; }
  virtual Vector initial_point(std::uint64_t seed) const = 0;
  virtual KnownConstants known_constants() const { return {}; }
};

/// f(x) = 1/2 x^T A x - b^T x with L = lambda_max(A).
class QuadraticProblem final : public Problem {
public:
  QuadraticProblem(Eigen::MatrixXd A, Vector b, std::optional<Vector> x0 = std::nullopt);

  std::string name() const override { return "quadratic"; }
  std::size_t dim() const override { return static_cast<std::size_t>(b_.size()); }
  double loss(const Vector &x) const override;
  Vector full_gradient(const Vector &x) const override;
  Vector initial_point(std::uint64_t seed) const override;
  KnownConstants known_constants() const override { return constants_; }

  const Eigen::MatrixXd &matrix() const { return A_; }
  const Vector &linear_term() const { return b_; }

private:
  Eigen::MatrixXd A_;
  Vector b_;
  std::optional<Vector> x0_;
  KnownConstants constants_;
};

std::unique_ptr<QuadraticProblem> quadratic_problem(Eigen::MatrixXd A, Vector b,
                                                    std::optional<Vector> x0 = std::nullopt);

/// (1 - x)^2 + 100 (y - x^2)^2, started from (-1.2, 1).
class RosenbrockProblem final : public Problem {
public:
  std::string name() const override { return "rosenbrock"; }
  std::size_t dim() const override { return 2; }
  double loss(const Vector &x) const override;
  Vector full_gradient(const Vector &x) const override;
  Vector initial_point(std::uint64_t seed) const override;
  KnownConstants known_constants() const override;
};

std::unique_ptr<RosenbrockProblem> rosenbrock_problem();

/// Binary cross-entropy with a sigmoid link; parameters are [w (dim), b (1)].
class LogisticProblem final : public Problem {
public:
  explicit LogisticProblem(Dataset data);

  std::string name() const override { return "logistic"; }
  std::size_t dim() const override { return data_.dim() + 1; }
  std::size_t num_samples() const override { return data_.size(); }
  double loss(const Vector &x) const override;
  Vector full_gradient(const Vector &x) const override;
  double batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch,
                                 Vector &grad) const override;
  double batch_loss(const Vector &x, std::span<const std::size_t> batch) const override;
  Vector batch_gradient(const Vector &x, std::span<const std::size_t> batch) const override;
  std::vector<ParamBlock> blocks() const override;
  Vector initial_point(std::uint64_t seed) const override;

  const Dataset &data() const { return data_; }

private:
  Dataset data_;
  std::vector<std::size_t> all_;
};

/// Two balanced Gaussian blobs; labels in {0, 1}.
std::unique_ptr<LogisticProblem> logistic_problem(std::size_t n_samples, std::size_t dim, std::uint64_t seed,
                                                  double separation = 2.0);

/**
 * Fully connected network with ReLU hidden layers and a softmax
 * cross-entropy head. `layer_sizes` = {inputs, hidden..., classes}; each
 * weight matrix and each bias is its own ParamBlock ("W1", "b1", ...).
 * Weight matrices are stored column-major (out x in).
 */
class MlpProblem final : public Problem {
public:
  MlpProblem(std::vector<std::size_t> layer_sizes, Dataset data);

  std::string name() const override { return "mlp"; }
  std::size_t dim() const override { return dim_; }
  std::size_t num_samples() const override { return data_.size(); }
  double loss(const Vector &x) const override;
  Vector full_gradient(const Vector &x) const override;
  double batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch,
                                 Vector &grad) const override;
  double batch_loss(const Vector &x, std::span<const std::size_t> batch) const override;
  Vector batch_gradient(const Vector &x, std::span<const std::size_t> batch) const override;
  std::vector<ParamBlock> blocks() const override { return blocks_; }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer; biases too.
  Vector initial_point(std::uint64_t seed) const override;

  const std::vector<std::size_t> &layer_sizes() const { return sizes_; }
  const Dataset &data() const { return data_; }

private:
  double evaluate(const Vector &x, std::span<const std::size_t> batch, Vector *grad) const;

  std::vector<std::size_t> sizes_;
  Dataset data_;
  std::vector<ParamBlock> blocks_;
  std::vector<std::size_t> all_;
  std::size_t dim_ = 0;
};

std::unique_ptr<MlpProblem> mlp_problem(std::vector<std::size_t> layer_sizes, Dataset data);

/// Central differences of problem.loss along each coordinate.
Vector finite_difference_gradient(const Problem &problem, const Vector &x, double step = 1e-6);

/**
 * Empirical update-norm bound: the largest gradient norm seen over
 * `points`, times 1.1. For stochastic problems with `batch_size` > 0 every
 * batch of one shuffled epoch is evaluated at each point.
 */
double estimate_sigma(const Problem &problem, std::span<const Vector> points, std::size_t batch_size = 0,
                      std::uint64_t seed = 0);

/// `count` points uniform in the ball of `radius` around `center`.
std::vector<Vector> sample_ball(const Vector &center, double radius, std::size_t count, std::uint64_t seed);

} // namespace rdbd
