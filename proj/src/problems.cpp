#include "rdbd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rdbd {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void check_batch(std::span<const std::size_t> batch, std::size_t n) {
  if (batch.empty()) {
    throw std::invalid_argument("empty batch");
  }
  for (auto i : batch) {
    if (i >= n) throw std::out_of_range("batch index out of range");
  }
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

} // namespace

double Problem::batch_loss(const Vector &x, std::span<const std::size_t>) const { return loss(x); }

Vector Problem::batch_gradient(const Vector &x, std::span<const std::size_t>) const { return full_gradient(x); }

double Problem::batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch, Vector &grad) const {
  grad = batch_gradient(x, batch);
  return batch_loss(x, batch);
}

// ---------------------------------------------------------------- quadratic

QuadraticProblem::QuadraticProblem(Eigen::MatrixXd A, Vector b, std::optional<Vector> x0)
    : A_(std::move(A)), b_(std::move(b)), x0_(std::move(x0)) {
  if (A_.rows() != A_.cols() || A_.rows() != b_.size()) {
    throw DimensionError("quadratic_problem: A must be square and match b");
  }
  if (b_.size() < 1) {
    throw DimensionError("quadratic_problem: dimension must be >= 1");
  }
  const double scale = std::max(1.0, A_.cwiseAbs().maxCoeff());
  if ((A_ - A_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("quadratic_problem: A must be symmetric");
  }
  if (x0_ && x0_->size() != b_.size()) {
    throw DimensionError("quadratic_problem: x0 has the wrong length");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A_);
  const Vector ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (lo < -1e-12 * std::max(1.0, std::abs(hi))) {
    throw std::invalid_argument("quadratic_problem: A must be positive semidefinite");
  }
  constants_.lipschitz_L = std::max(hi, 0.0);
  if (lo > 0.0) {
    const Vector xs = A_.ldlt().solve(b_);
    constants_.minimizer = xs;
    constants_.f_star = -0.5 * b_.dot(xs);
  }
}

double QuadraticProblem::loss(const Vector &x) const {
  require_same_size(x, b_, "quadratic loss");
  return 0.5 * x.dot(A_ * x) - b_.dot(x);
}

Vector QuadraticProblem::full_gradient(const Vector &x) const {
  require_same_size(x, b_, "quadratic gradient");
  return A_ * x - b_;
}

Vector QuadraticProblem::initial_point(std::uint64_t) const {
  return x0_ ? *x0_ : Vector::Ones(b_.size());
}

std::unique_ptr<QuadraticProblem> quadratic_problem(Eigen::MatrixXd A, Vector b, std::optional<Vector> x0) {
  return std::make_unique<QuadraticProblem>(std::move(A), std::move(b), std::move(x0));
}

// ---------------------------------------------------------------- rosenbrock

double RosenbrockProblem::loss(const Vector &x) const {
  if (x.size() != 2) throw DimensionError("rosenbrock expects 2 coordinates");
  const double a = 1.0 - x[0];
  const double b = x[1] - x[0] * x[0];
  return a * a + 100.0 * b * b;
}

Vector RosenbrockProblem::full_gradient(const Vector &x) const {
  if (x.size() != 2) throw DimensionError("rosenbrock expects 2 coordinates");
  const double b = x[1] - x[0] * x[0];
  Vector g(2);
  g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * b;
  g[1] = 200.0 * b;
  return g;
}

Vector RosenbrockProblem::initial_point(std::uint64_t) const {
  Vector x(2);
  x << -1.2, 1.0;
  return x;
}

KnownConstants RosenbrockProblem::known_constants() const {
  KnownConstants k;
  k.f_star = 0.0;
  k.minimizer = Vector::Ones(2);
  return k;
}

std::unique_ptr<RosenbrockProblem> rosenbrock_problem() { return std::make_unique<RosenbrockProblem>(); }

// ---------------------------------------------------------------- logistic

LogisticProblem::LogisticProblem(Dataset data) : data_(std::move(data)) {
  data_.validate();
  if (data_.num_classes > 2) {
    throw std::invalid_argument("logistic_problem needs binary labels");
  }
  all_ = iota_indices(data_.size());
}

double LogisticProblem::batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch,
                                                Vector &grad) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw DimensionError("logistic parameter vector has the wrong length");
  }
  check_batch(batch, data_.size());
  const auto d = static_cast<Eigen::Index>(data_.dim());
  const auto w = x.head(d);
  const double bias = x[d];
  grad = Vector::Zero(x.size());
  double total = 0.0;
  for (auto i : batch) {
    const auto row = data_.features.row(static_cast<Eigen::Index>(i));
    const double z = row.dot(w) + bias;
    const double y = data_.labels[i];
    total += softplus(z) - y * z;
    const double r = sigmoid(z) - y;
    grad.head(d) += r * row.transpose();
    grad[d] += r;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grad *= inv;
  return total * inv;
}

double LogisticProblem::batch_loss(const Vector &x, std::span<const std::size_t> batch) const {
  Vector g;
  return batch_loss_and_gradient(x, batch, g);
}

Vector LogisticProblem::batch_gradient(const Vector &x, std::span<const std::size_t> batch) const {
  Vector g;
  batch_loss_and_gradient(x, batch, g);
  return g;
}

double LogisticProblem::loss(const Vector &x) const { return batch_loss(x, all_); }

Vector LogisticProblem::full_gradient(const Vector &x) const { return batch_gradient(x, all_); }

std::vector<ParamBlock> LogisticProblem::blocks() const {
  return {{"w", 0, data_.dim()}, {"b", data_.dim(), 1}};
}

Vector LogisticProblem::initial_point(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(data_.dim()));
  std::uniform_real_distribution<double> u(-bound, bound);
  Vector x(static_cast<Eigen::Index>(dim()));
  for (auto &e : x) e = u(rng);
  return x;
}

std::unique_ptr<LogisticProblem> logistic_problem(std::size_t n_samples, std::size_t dim, std::uint64_t seed,
                                                  double separation) {
  if (n_samples < dim) {
    throw std::invalid_argument("logistic_problem needs n_samples >= dim");
  }
  return std::make_unique<LogisticProblem>(synthetic_blobs(n_samples, dim, 2, seed, separation));
}

// ---------------------------------------------------------------- mlp

MlpProblem::MlpProblem(std::vector<std::size_t> layer_sizes, Dataset data)
    : sizes_(std::move(layer_sizes)), data_(std::move(data)) {
  data_.validate();
  if (sizes_.size() < 2) {
    throw std::invalid_argument("mlp needs at least input and output sizes");
  }
  if (std::any_of(sizes_.begin(), sizes_.end(), [](std::size_t s) { return s == 0; })) {
    throw std::invalid_argument("mlp layer sizes must be positive");
  }
  if (sizes_.front() != data_.dim()) {
    throw DimensionError("mlp input size " + std::to_string(sizes_.front()) + " does not match feature dim " +
                         std::to_string(data_.dim()));
  }
  if (sizes_.back() != static_cast<std::size_t>(data_.num_classes)) {
    throw DimensionError("mlp output size does not match num_classes");
  }
  std::size_t offset = 0;
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    const std::size_t w = sizes_[l] * sizes_[l - 1];
    blocks_.push_back({"W" + std::to_string(l), offset, w});
    offset += w;
    blocks_.push_back({"b" + std::to_string(l), offset, sizes_[l]});
    offset += sizes_[l];
  }
  dim_ = offset;
  all_ = iota_indices(data_.size());
}

double MlpProblem::evaluate(const Vector &x, std::span<const std::size_t> batch, Vector *grad) const {
  if (static_cast<std::size_t>(x.size()) != dim_) {
    throw DimensionError("mlp parameter vector has the wrong length");
  }
  check_batch(batch, data_.size());
  const std::size_t layers = sizes_.size() - 1;
  const auto nb = static_cast<Eigen::Index>(batch.size());

  using Mat = Eigen::MatrixXd;
  using ConstMap = Eigen::Map<const Mat>;
  const auto weight = [&](std::size_t l) {
    const auto &blk = blocks_[2 * l];
    return ConstMap(x.data() + blk.offset, static_cast<Eigen::Index>(sizes_[l + 1]),
                    static_cast<Eigen::Index>(sizes_[l]));
  };
  const auto bias = [&](std::size_t l) {
    const auto &blk = blocks_[2 * l + 1];
    return Eigen::Map<const Vector>(x.data() + blk.offset, static_cast<Eigen::Index>(sizes_[l + 1]));
  };

  // activations[l] is (units x batch); activations[0] holds the inputs.
  std::vector<Mat> act(layers + 1);
  std::vector<Mat> pre(layers);
  act[0].resize(static_cast<Eigen::Index>(sizes_[0]), nb);
  for (Eigen::Index j = 0; j < nb; ++j) {
    act[0].col(j) = data_.features.row(static_cast<Eigen::Index>(batch[static_cast<std::size_t>(j)])).transpose();
  }
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = weight(l) * act[l];
    pre[l].colwise() += bias(l);
    act[l + 1] = (l + 1 < layers) ? Mat(pre[l].cwiseMax(0.0)) : pre[l];
  }

  // Softmax cross-entropy on the logits.
  Mat &logits = act[layers];
  const Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  Mat probs = (logits.rowwise() - mx).array().exp().matrix();
  const Eigen::RowVectorXd sums = probs.colwise().sum();
  double total = 0.0;
  for (Eigen::Index j = 0; j < nb; ++j) {
    const int y = data_.labels[batch[static_cast<std::size_t>(j)]];
    total += std::log(sums[j]) + mx[j] - logits(y, j);
  }
  const double inv = 1.0 / static_cast<double>(nb);

  if (grad != nullptr) {
    grad->setZero(static_cast<Eigen::Index>(dim_));
    probs.array().rowwise() /= sums.array();
    Mat delta = probs;
    for (Eigen::Index j = 0; j < nb; ++j) {
      delta(data_.labels[batch[static_cast<std::size_t>(j)]], j) -= 1.0;
    }
    delta *= inv;
    for (std::size_t l = layers; l-- > 0;) {
      const auto &wb = blocks_[2 * l];
      const auto &bb = blocks_[2 * l + 1];
      Eigen::Map<Mat>(grad->data() + wb.offset, static_cast<Eigen::Index>(sizes_[l + 1]),
                      static_cast<Eigen::Index>(sizes_[l])) = delta * act[l].transpose();
      Eigen::Map<Vector>(grad->data() + bb.offset, static_cast<Eigen::Index>(sizes_[l + 1])) =
          delta.rowwise().sum();
      if (l > 0) {
        Mat back = weight(l).transpose() * delta;
        delta = (pre[l - 1].array() > 0.0).select(back, 0.0);
      }
    }
  }
  return total * inv;
}

double MlpProblem::batch_loss_and_gradient(const Vector &x, std::span<const std::size_t> batch,
                                           Vector &grad) const {
  return evaluate(x, batch, &grad);
}

double MlpProblem::batch_loss(const Vector &x, std::span<const std::size_t> batch) const {
  return evaluate(x, batch, nullptr);
}

Vector MlpProblem::batch_gradient(const Vector &x, std::span<const std::size_t> batch) const {
  Vector g;
  evaluate(x, batch, &g);
  return g;
}

double MlpProblem::loss(const Vector &x) const { return batch_loss(x, all_); }

Vector MlpProblem::full_gradient(const Vector &x) const { return batch_gradient(x, all_); }

Vector MlpProblem::initial_point(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  Vector x(static_cast<Eigen::Index>(dim_));
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (const auto *blk : {&blocks_[2 * l], &blocks_[2 * l + 1]}) {
      for (std::size_t i = 0; i < blk->size; ++i) {
        x[static_cast<Eigen::Index>(blk->offset + i)] = u(rng);
      }
    }
  }
  return x;
}

std::unique_ptr<MlpProblem> mlp_problem(std::vector<std::size_t> layer_sizes, Dataset data) {
  return std::make_unique<MlpProblem>(std::move(layer_sizes), std::move(data));
}

// ---------------------------------------------------------------- oracles

Vector finite_difference_gradient(const Problem &problem, const Vector &x, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("finite-difference step must be > 0");
  }
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    probe[i] = xi + step;
    const double up = problem.loss(probe);
    probe[i] = xi - step;
    const double down = problem.loss(probe);
    probe[i] = xi;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double estimate_sigma(const Problem &problem, std::span<const Vector> points, std::size_t batch_size,
                      std::uint64_t seed) {
  if (points.empty()) {
    throw std::invalid_argument("estimate_sigma needs at least one sample point");
  }
  double best = 0.0;
  const bool batched = batch_size > 0 && problem.stochastic();
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (!batched) {
      best = std::max(best, problem.full_gradient(points[p]).norm());
      continue;
    }
    BatchSampler sampler(problem.num_samples(), batch_size, splitmix64(seed + p));
    const std::size_t batches = (problem.num_samples() + batch_size - 1) / batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      best = std::max(best, problem.batch_gradient(points[p], sampler.next()).norm());
    }
  }
  return 1.1 * best;
}

std::vector<Vector> sample_ball(const Vector &center, double radius, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto d = center.size();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector dir(d);
    do {
      for (auto &e : dir) e = normal(rng);
    } while (dir.norm() == 0.0);
    const double r = radius * std::pow(unit(rng), 1.0 / static_cast<double>(d));
    out.push_back(center + r * dir.normalized());
  }
  return out;
}

} // namespace rdbd
