// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "rdbd/baselines.hpp"
#include "rdbd/data.hpp"
#include "rdbd/harness.hpp"
#include "rdbd/problems.hpp"
#include "rdbd/schedulers.hpp"
#include "rdbd/theory.hpp"

using namespace rdbd;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(const char *format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string csv_of(const Trace &t) {
  std::ostringstream os;
  write_trace_csv(t, os);
  return os.str();
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

std::unique_ptr<QuadraticProblem> diag_quadratic(std::initializer_list<double> d) {
  return quadratic_problem(vec(d).asDiagonal(), Vector::Zero(static_cast<Eigen::Index>(d.size())));
}

// Runnable preset configurations (sweeps expanded), or empty when MNIST is absent.
struct PresetRuns {
  std::vector<std::pair<std::string, RunConfig>> runnable;
  std::vector<std::string> skipped;
};

PresetRuns expand_presets() {
  PresetRuns out;
  const bool have_mnist = locate_mnist(std::nullopt).has_value();
  for (const auto &p : presets()) {
    if (p.reserved) continue;
    if (p.config.problem.kind == "mlp-mnist" && !have_mnist) {
      out.skipped.push_back(p.name);
      continue;
    }
    if (!p.sweep) {
      out.runnable.emplace_back(p.name, p.config);
      continue;
    }
    for (double v : p.sweep->values) {
      RunConfig c = p.config;
      if (p.sweep->param == "alpha0") c.alpha0 = v;
      if (p.sweep->param == "eta") c.eta = v;
      if (p.sweep->param == "batch_size") c.batch_size = static_cast<std::size_t>(v);
      out.runnable.emplace_back(p.name + "[" + p.sweep->param + "=" + fmt("%g", v) + "]", c);
    }
  }
  return out;
}

double median_metric(RunConfig base, OptimizerKind opt, const std::vector<std::uint64_t> &seeds, Metric m,
                     std::size_t *reverts = nullptr) {
  std::vector<double> vals;
  for (auto s : seeds) {
    RunConfig c = base;
    c.optimizer = opt;
    c.seed = s;
    const Trace t = run(c);
    vals.push_back(metric_value(t, m));
    if (reverts) *reverts += t.revert_count();
  }
  return quantile(vals, 0.5);
}

RunConfig figure_fixture() {
  RunConfig c = find_preset("logistic-default").config;
  c.timing = false;
  return c;
}

// ------------------------------------------------------------------ criteria

Outcome c1_dbd_convergence() {
  const auto q = diag_quadratic({1, 2});
  const Vector x0 = vec({1.0, std::sqrt(0.5)});
  const auto r = check_dbd_convergence(*q, x0, 0.5, 0.1);
  const bool horizon_ok = r.horizon == 534;
  return pass_if(r.report.satisfied && horizon_ok,
                 fmt("first t with ||grad|| <= 0.1: %g, allowed T = %zu, sigma %.6g (observed %.6g)",
                     r.report.empirical_value, r.horizon, r.sigma, r.observed_sigma));
}

Outcome c2_alpha_envelope(const PresetRuns &runs) {
  std::size_t checked = 0;
  double worst = INFINITY;
  std::string failed;
  for (const auto &[name, cfg] : runs.runnable) {
    RunConfig c = cfg;
    c.clamp = false;
    c.timing = false;
    const Trace t = run(c);
    const auto rep = check_alpha_envelope(t, 1e-10);
    worst = std::min(worst, rep.margin);
    ++checked;
    if (!rep.satisfied) failed += " " + name;
  }
  std::string detail = fmt("%zu preset runs, smallest margin %.3g", checked, worst);
  if (!runs.skipped.empty()) detail += fmt(", %zu MNIST preset(s) skipped", runs.skipped.size());
  if (!failed.empty()) detail += "; violated by" + failed;
  return pass_if(failed.empty() && checked > 0, detail);
}

Outcome c3_revert_exactness() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u_eta(1e-4, 0.1), u_h(-10, 10), u_g(-1, 1), u_a(1e-3, 1.0);
  std::uniform_int_distribution<int> u_dim(1, 8);
  std::size_t ok = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = static_cast<std::size_t>(u_dim(rng));
    const double eta = u_eta(rng), h_target = u_h(rng), alpha_before = u_a(rng);
    Vector g_prev(dim), noise(dim), x0(dim);
    do {
      for (auto &e : g_prev) e = u_g(rng);
    } while (g_prev.squaredNorm() < 1e-6);
    for (auto &e : noise) e = u_g(rng);
    for (auto &e : x0) e = u_g(rng);
    // g_pp with <g_prev, g_pp> = h_target.
    noise -= noise.dot(g_prev) / g_prev.squaredNorm() * g_prev;
    const Vector g_pp = h_target / g_prev.squaredNorm() * g_prev + noise;

    auto s = ScheduleState::fresh(dim, alpha_before, eta, ClampRange::disabled());
    s.prev_update = g_pp; // prev_dot stays 0, so step 1 cannot revert
    const auto step1 = rdbd_step(s, ParamVector("x", x0), GradientEstimate(g_prev));
    const double h_prev = step1.h;
    // Pre-increment state: the weights had step 1 used alpha_before instead of alpha_before + eta h_prev.
    const WeightsAndRate before{x0 - alpha_before * g_prev, alpha_before};

    // g_t opposes the sign of h_prev, so the revert fires.
    const Vector g_t = -std::copysign(1.0, h_prev) * g_prev + 0.1 * noise;
    const auto step2 = rdbd_step(s, ParamVector("x", step1.new_values), GradientEstimate(g_t));
    if (!step2.reverted) continue;
    // Undo the fresh increment and descent to expose the post-revert state.
    const WeightsAndRate after{step2.new_values + step2.new_alpha * g_t, step2.new_alpha - eta * step2.h};

    const double inc = std::abs(eta * h_prev);
    const double a_err = std::abs(after.alpha - before.alpha) / std::max(std::abs(before.alpha), inc);
    const double x_err = (after.x - before.x).cwiseAbs().maxCoeff() /
                         std::max(before.x.cwiseAbs().maxCoeff(), inc * g_prev.cwiseAbs().maxCoeff());
    worst = std::max({worst, a_err, x_err});
    if (revert_exactness_check(before, after, eta, h_prev, g_prev) && a_err <= 1e-12 && x_err <= 1e-12) ++ok;
  }
  return pass_if(ok == 1000, fmt("%zu / 1000 triples exact; worst alpha/x relative error %.2e", ok, worst));
}

Outcome c4_part2_equality() {
  std::mt19937_64 rng(44);
  double worst = 0.0;

  // Per-step: from a shared state, every step whose revert condition is false matches DBD.
  const auto per_step = [&](const std::function<Vector(int)> &stream, std::size_t &compared, std::size_t &reverted) {
    auto shared = ScheduleState::fresh(3, 0.05, 0.02, ClampRange::disabled());
    Vector x = Vector::Ones(3);
    for (int t = 0; t < 400; ++t) {
      const Vector g = stream(t);
      auto a = shared, b = shared;
      const auto d = dbd_step(a, ParamVector("x", x), GradientEstimate(g));
      const auto r = rdbd_step(b, ParamVector("x", x), GradientEstimate(g));
      if (r.reverted) {
        ++reverted;
      } else {
        ++compared;
        worst = std::max({worst, oracle::max_rel_err(d.new_values, r.new_values), oracle::rel_err(d.new_alpha, r.new_alpha)});
      }
      shared = b;
      x = r.new_values;
    }
  };
  std::size_t cmp_alt = 0, rev_alt = 0, cmp_mixed = 0, rev_mixed = 0;
  // Dominant-coordinate signs + + - - make h alternate: +, -, +, -.
  per_step([&](int t) {
    Vector g = oracle::to_eigen(oracle::random_vec(rng, 3, -0.3, 0.3));
    g[0] += (t / 2) % 2 ? -1.0 : 1.0;
    return g;
  }, cmp_alt, rev_alt);
  per_step([&](int) { return oracle::to_eigen(oracle::random_vec(rng, 3, -1, 1)); }, cmp_mixed, rev_mixed);

  // Full trajectories: streams whose h products are never negative.
  std::size_t traj_reverts = 0;
  const auto trajectory = [&](const std::function<Vector(int)> &stream) {
    auto sd = ScheduleState::fresh(4, 0.01, 0.05, ClampRange::disabled()), sr = sd;
    Vector xd = Vector::Zero(4), xr = xd;
    for (int t = 0; t < 500; ++t) {
      const Vector g = stream(t);
      const auto d = dbd_step(sd, ParamVector("x", xd), GradientEstimate(g));
      const auto r = rdbd_step(sr, ParamVector("x", xr), GradientEstimate(g));
      traj_reverts += r.reverted ? 1 : 0;
      xd = d.new_values;
      xr = r.new_values;
      worst = std::max({worst, oracle::max_rel_err(xd, xr), oracle::rel_err(sd.alpha, sr.alpha)});
    }
  };
  trajectory([&](int) { return oracle::to_eigen(oracle::random_vec(rng, 4, 0.0, 1.0)); }); // h > 0 throughout
  trajectory([&](int t) {                                                                  // h < 0 throughout
    return Vector(oracle::to_eigen(oracle::random_vec(rng, 4, 0.1, 1.0)) * (t % 2 ? -1.0 : 1.0));
  });

  const bool ok = worst <= 1e-12 && cmp_alt > 0 && rev_alt > 0 && cmp_mixed > 50 && rev_mixed > 50 && traj_reverts == 0;
  return pass_if(ok, fmt("alternating-h stream %zu compared / %zu reverted; mixed stream %zu compared / %zu reverted; "
                         "two 500-step non-negative-product trajectories with %zu reverts; worst relative gap %.2e",
                         cmp_alt, rev_alt, cmp_mixed, rev_mixed, traj_reverts, worst));
}

Outcome c5_steeper_descent() {
  struct Case {
    std::unique_ptr<QuadraticProblem> q;
    Vector x0;
    double alpha_times_L;
  };
  std::vector<Case> cases;
  cases.push_back({diag_quadratic({1, 2}), vec({1.0, std::sqrt(0.5)}), 1.0});
  cases.push_back({diag_quadratic({1, 10}), vec({1.0, 1.0}), 1.0});
  // alpha0 = 1.5/L overshoots the stiff axis, so h changes sign and reverts occur.
  cases.push_back({diag_quadratic({1, 10}), vec({1.0, 1.0}), 1.5});
  std::string detail;
  bool ok = true;
  for (const auto &c : cases) {
    const double L = *c.q->known_constants().lipschitz_L;
    const double sigma = std::sqrt(2.0 * L * c.q->loss(c.x0));
    const double eta = 2.0 / (L * sigma * sigma);
    const auto r = check_steeper_descent(*c.q, c.x0, c.alpha_times_L / L, eta, 200);
    ok = ok && r.report.satisfied;
    detail += fmt("[L=%g alpha0=%g/L: %zu steps checked, %zu skipped, worst f gap %.2e, eta condition %s] ", L, c.alpha_times_L, r.steps_checked,
                  r.steps_skipped, r.report.empirical_value, r.eta_condition ? "met" : "unmet");
  }
  return pass_if(ok, detail);
}

Outcome c6_hypergradient() {
  std::mt19937_64 rng(6);
  const auto q = quadratic_problem(vec({1, 2, 5}).asDiagonal(), vec({1, 0, -1}));
  const auto rb = rosenbrock_problem();
  double worst = 0.0;
  std::size_t points = 0;
  for (const Problem *p : {static_cast<const Problem *>(q.get()), static_cast<const Problem *>(rb.get())}) {
    const bool rosen = p->name() == "rosenbrock";
    std::uniform_real_distribution<double> ua(rosen ? 1e-4 : 0.01, rosen ? 1e-3 : 0.4);
    for (int i = 0; i < 50; ++i) {
      const Vector x = oracle::to_eigen(oracle::random_vec(rng, p->dim(), -1.5, 1.5));
      const double alpha = ua(rng);
      const Vector g = p->full_gradient(x);
      const auto f = [&](double a) { return p->loss(x - a * g); };
      const double fd = oracle::derivative(f, alpha, alpha * 1e-3);
      const double an = dbd_hypergradient(p->full_gradient(x - alpha * g), g);
      worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-12));
      ++points;
    }
  }
  return pass_if(worst <= 1e-6, fmt("%zu points, worst relative error %.2e", points, worst));
}

Outcome c7_calculators() {
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-14 * std::max(std::abs(b), 1e-300); };
  TheoryParams p;
  std::size_t ok = 0, total = 0;
  const auto expect = [&](double got, double want) {
    ++total;
    ok += close(got, want) ? 1 : 0;
  };
  p = {1, 1, 1, 1, 0.0, 1, 1};
  expect(dbd_iteration_bound(p), 2.0);
  p = {2, 1, 1, 1, 0.5, 0.1, 1};
  expect(dbd_iteration_bound(p), 1600.0 / 3.0);
  p = {1, 1, 1, 1, 0.5, 1, 1};
  expect(rdbd_iteration_bound(p), 2.75);
  p.epsilon = 0.5;
  expect(rdbd_iteration_bound(p), 11.0);
  p = {1, 1, 1, 1, 0.5, 1, 1};
  const auto h = rdbd_theoretical_hyperparams(p, 4);
  expect(h.alpha0, 0.5);
  expect(h.eta, 0.0625);
  const auto [lo, hi] = alpha_envelope(0.005, 0.01, 1.0, 10);
  expect(lo, -0.095);
  expect(hi, 0.105);
  const auto [lo0, hi0] = alpha_envelope(0.005, 0.01, 1.0, 0);
  expect(lo0, 0.005);
  expect(hi0, 0.005);
  const auto d1 = descent_coefficient_bound(0.5, 2.0, 0.5);
  expect(d1.empirical_value, 4.0);
  expect(d1.theoretical_value, 16.0 / 3.0);
  const auto d2 = descent_coefficient_bound(0.5, 1.0, 0.5);
  expect(d2.empirical_value, 8.0 / 3.0);
  expect(d2.theoretical_value, 8.0 / 3.0);
  ++total;
  ok += (!descent_coefficient_bound(3.0, 1.0, 0.5).applicable && d1.satisfied && d2.satisfied) ? 1 : 0;
  return pass_if(ok == total, fmt("%zu / %zu hand values reproduced to 1e-14 relative", ok, total));
}

Outcome c8_gradient_oracles() {
  std::mt19937_64 rng(8);
  struct Entry {
    std::unique_ptr<Problem> p;
    double tol;
  };
  std::vector<Entry> zoo;
  zoo.push_back({quadratic_problem(vec({1, 2, 5}).asDiagonal(), vec({1, 0, -1})), 1e-6});
  zoo.push_back({rosenbrock_problem(), 1e-6});
  zoo.push_back({logistic_problem(256, 8, 3), 1e-6});
  zoo.push_back({mlp_problem({6, 12, 8, 3}, synthetic_blobs(64, 6, 3, 4, 3.0)), 1e-4});
  std::string detail;
  bool ok = true;
  for (const auto &e : zoo) {
    const bool mlp = e.p->name() == "mlp";
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      Vector x = mlp ? Vector(e.p->initial_point(rng()))
                     : oracle::to_eigen(oracle::random_vec(rng, e.p->dim(), -1.5, 1.5));
      worst = std::max(worst, oracle::max_rel_err(e.p->full_gradient(x), finite_difference_gradient(*e.p, x, 1e-6)));
    }
    ok = ok && worst <= e.tol;
    detail += fmt("%s %.1e; ", e.p->name().c_str(), worst);
  }
  return pass_if(ok, "worst relative error: " + detail);
}

Outcome c9_stochastic_ordering() {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const RunConfig base = figure_fixture();
  const double sgd = median_metric(base, OptimizerKind::Sgd, seeds, Metric::FinalLoss);
  const double rdbd = median_metric(base, OptimizerKind::Rdbd, seeds, Metric::FinalLoss);
  RunConfig adam_base = base;
  adam_base.eta = 5e-7;
  adam_base.beta1 = 0.05;
  adam_base.beta2 = 0.99;
  adam_base.alpha_max = 0.05;
  const double adam = median_metric(adam_base, OptimizerKind::Adam, seeds, Metric::FinalLoss);
  const double adam_rdbd = median_metric(adam_base, OptimizerKind::AdamRdbd, seeds, Metric::FinalLoss);
  return pass_if(rdbd <= sgd && adam_rdbd <= adam,
                 fmt("median final loss: RDBD %.6f vs SGD %.6f (%s); Adam+RDBD %.6f vs Adam %.6f (%s)", rdbd, sgd,
                     rdbd <= sgd ? "ok" : "violated", adam_rdbd, adam, adam_rdbd <= adam ? "ok" : "violated"));
}

Outcome c10_dbd_vs_rdbd() {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const RunConfig base = figure_fixture();
  std::size_t reverts = 0;
  const double dbd = median_metric(base, OptimizerKind::Dbd, seeds, Metric::FinalLoss);
  const double rdbd = median_metric(base, OptimizerKind::Rdbd, seeds, Metric::FinalLoss, &reverts);
  return pass_if(rdbd <= dbd && reverts >= 1,
                 fmt("median final loss: RDBD %.6f vs DBD %.6f (gap %+.2e); RDBD reverts over 5 seeds: %zu", rdbd, dbd,
                     rdbd - dbd, reverts));
}

Outcome c11_mnist() {
  if (!locate_mnist(std::nullopt)) return {Status::Skip, "MNIST_DIR not set; real-data tier not run"};
  RunConfig base = find_preset("mnist-default").config;
  base.timing = false;
  base.eval_every = 10;
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  try {
    const double sgd = median_metric(base, OptimizerKind::Sgd, seeds, Metric::StepsToThreshold);
    const double rdbd = median_metric(base, OptimizerKind::Rdbd, seeds, Metric::StepsToThreshold);
    return pass_if(rdbd < sgd, fmt("median steps to loss 0.5: RDBD %g vs SGD %g", rdbd, sgd));
  } catch (const DataMissing &e) {
    return {Status::Skip, std::string("MNIST files incomplete: ") + e.what()};
  }
}

Outcome c12_idx() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> dim(1, 9), byte(0, 255);
  std::size_t round_trips = 0;
  for (int trial = 0; trial < 200; ++trial) {
    IdxTensor t;
    if (trial % 2) t.dims = {std::uint32_t(dim(rng))};
    else t.dims = {std::uint32_t(dim(rng)), std::uint32_t(dim(rng)), std::uint32_t(dim(rng))};
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    for (std::size_t i = 0; i < n; ++i) t.data.push_back(std::uint8_t(byte(rng)));
    const auto back = parse_idx(serialize_idx(t));
    round_trips += (back.dims == t.dims && back.data == t.data) ? 1 : 0;
  }
  const auto rejects = [](std::vector<std::uint8_t> bytes) {
    try {
      parse_idx(bytes);
      return false;
    } catch (const IdxError &) {
      return true;
    }
  };
  const bool bad_magic = rejects({0, 0, 8, 2, 0, 0, 0, 1, 5});
  const bool truncated = rejects({0, 0, 8, 1, 0, 0, 0, 4, 1, 2});
  return pass_if(round_trips == 200 && bad_magic && truncated,
                 fmt("%zu / 200 round trips; bad magic %s; truncated payload %s", round_trips,
                     bad_magic ? "rejected" : "ACCEPTED", truncated ? "rejected" : "ACCEPTED"));
}

Outcome c13_determinism(const PresetRuns &runs) {
  std::size_t same = 0;
  std::string differing;
  for (const auto &[name, cfg] : runs.runnable) {
    RunConfig c = cfg;
    c.timing = false;
    if (csv_of(run(c)) == csv_of(run(c))) ++same;
    else differing += " " + name;
  }
  std::string detail = fmt("%zu / %zu preset runs byte-identical", same, runs.runnable.size());
  if (!runs.skipped.empty()) detail += fmt(", %zu MNIST preset(s) skipped", runs.skipped.size());
  if (!differing.empty()) detail += "; differing:" + differing;
  return pass_if(differing.empty() && same > 0, detail);
}

} // namespace

int main() {
  const PresetRuns runs = expand_presets();
  struct Criterion {
    const char *name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"full-batch DBD reaches eps within the iteration bound", c1_dbd_convergence},
      {"alpha stays inside the eta-sigma envelope on every preset", [&] { return c2_alpha_envelope(runs); }},
      {"revert restores alpha and corrects weights exactly", c3_revert_exactness},
      {"RDBD equals DBD when no revert fires", c4_part2_equality},
      {"scheduled step descends at least as far as the plain step", c5_steeper_descent},
      {"hypergradient matches numerical d/dalpha", c6_hypergradient},
      {"theory calculators reproduce hand values", c7_calculators},
      {"analytic gradients match finite differences", c8_gradient_oracles},
      {"stochastic ordering RDBD<=SGD and Adam+RDBD<=Adam", c9_stochastic_ordering},
      {"RDBD<=DBD under mini-batch noise with reverts", c10_dbd_vs_rdbd},
      {"MNIST MLP reaches loss 0.5 sooner with RDBD", c11_mnist},
      {"IDX round-trip and rejection", c12_idx},
      {"preset traces are byte-identical across reruns", [&] { return c13_determinism(runs); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception &e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const char *tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail ? 1 : 0;
    std::printf("[%s] criterion %2zu: %s -- %s (%.2fs)\n", tag, i + 1, criteria[i].name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
