#include "rdbd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "rdbd/baselines.hpp"
#include "rdbd/data.hpp"
#include "rdbd/schedulers.hpp"

namespace rdbd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  char *end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ConfigError("invalid number for '" + std::string(key) + "': '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  char *end = nullptr;
  if (s.empty() || s.front() == '-') {
    throw ConfigError("invalid non-negative integer for '" + std::string(key) + "': '" + s + "'");
  }
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) {
    throw ConfigError("invalid non-negative integer for '" + std::string(key) + "': '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("invalid boolean for '" + std::string(key) + "': '" + s + "'");
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

} // namespace

// ------------------------------------------------------------------ config

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
  case OptimizerKind::Sgd:
    return "sgd";
  case OptimizerKind::Adam:
    return "adam";
  case OptimizerKind::Dbd:
    return "dbd";
  case OptimizerKind::Rdbd:
    return "rdbd";
  case OptimizerKind::AdamRdbd:
    return "adam_rdbd";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  std::string s = trim(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(s.begin(), s.end(), '-', '_');
  std::replace(s.begin(), s.end(), '+', '_');
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "dbd") return OptimizerKind::Dbd;
  if (s == "rdbd") return OptimizerKind::Rdbd;
  if (s == "adam_rdbd") return OptimizerKind::AdamRdbd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string RunConfig::display_label() const {
  return label.empty() ? std::string(to_string(optimizer)) : label;
}

void validate(const RunConfig &cfg) {
  static const std::set<std::string> kinds = {"quadratic", "rosenbrock", "logistic", "mlp-blobs", "mlp-mnist"};
  if (!kinds.contains(cfg.problem.kind)) {
    throw ConfigError("unknown problem '" + cfg.problem.kind + "'");
  }
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!std::isfinite(cfg.alpha0)) throw ConfigError("alpha0 must be finite");
  if (!std::isfinite(cfg.eta) || cfg.eta < 0.0) throw ConfigError("eta must be finite and >= 0");
  if (!std::isfinite(cfg.alpha_min)) throw ConfigError("alpha_min must be finite");
  if (cfg.alpha_max && !(*cfg.alpha_max >= cfg.alpha_min)) throw ConfigError("alpha_max must be >= alpha_min");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(cfg.eps_hat > 0.0)) throw ConfigError("eps_hat must be > 0");
  const auto &p = cfg.problem;
  if (p.kind == "quadratic") {
    if (p.quad_diag.empty()) throw ConfigError("quad_diag must not be empty");
    if (!p.x0.empty() && p.x0.size() != p.quad_diag.size()) throw ConfigError("x0 length must match quad_diag");
  }
  if (p.kind == "logistic" || p.kind == "mlp-blobs") {
    if (p.n_samples < 1 || p.dim < 1) throw ConfigError("n_samples and dim must be >= 1");
    if (p.kind == "logistic" && p.n_samples < p.dim) throw ConfigError("logistic needs n_samples >= dim");
    if (cfg.batch_size > p.n_samples) throw ConfigError("batch_size exceeds n_samples");
  }
  if (p.kind == "mlp-mnist" && cfg.batch_size > p.subset) throw ConfigError("batch_size exceeds subset");
}

ClampRange effective_clamp(const RunConfig &cfg) {
  if (!cfg.clamp) return ClampRange::disabled();
  ClampRange c;
  c.lo = cfg.alpha_min;
  if (cfg.alpha_max) {
    c.hi = *cfg.alpha_max;
  } else if (cfg.optimizer == OptimizerKind::AdamRdbd) {
    c.hi = 10.0 * cfg.alpha0;
  }
  return c;
}

void apply_setting(RunConfig &cfg, std::string_view key_in, std::string_view value) {
  const std::string key = trim(key_in);
  const std::string v = trim(value);
  auto &p = cfg.problem;
  const auto list_d = [&] {
    std::vector<double> out;
    if (v.empty()) return out;
    for (const auto &part : split(v, ',')) out.push_back(parse_double(key, part));
    return out;
  };
  if (key == "label") cfg.label = v;
  else if (key == "problem") p.kind = v;
  else if (key == "n_samples") p.n_samples = parse_uint(key, v);
  else if (key == "dim") p.dim = parse_uint(key, v);
  else if (key == "num_classes") p.num_classes = static_cast<int>(parse_uint(key, v));
  else if (key == "separation") p.separation = parse_double(key, v);
  else if (key == "quad_diag") p.quad_diag = list_d();
  else if (key == "x0") p.x0 = list_d();
  else if (key == "hidden") {
    p.hidden.clear();
    if (!v.empty()) {
      for (const auto &part : split(v, ',')) p.hidden.push_back(parse_uint(key, part));
    }
  } else if (key == "mnist_dir") p.mnist_dir = v;
  else if (key == "subset") p.subset = parse_uint(key, v);
  else if (key == "optimizer") cfg.optimizer = parse_optimizer(v);
  else if (key == "alpha0") cfg.alpha0 = parse_double(key, v);
  else if (key == "eta") cfg.eta = parse_double(key, v);
  else if (key == "batch_size") cfg.batch_size = parse_uint(key, v);
  else if (key == "steps") cfg.steps = parse_uint(key, v);
  else if (key == "seed") cfg.seed = parse_uint(key, v);
  else if (key == "clamp") cfg.clamp = parse_bool(key, v);
  else if (key == "alpha_min") cfg.alpha_min = parse_double(key, v);
  else if (key == "alpha_max") {
    if (v.empty() || v == "auto") cfg.alpha_max.reset();
    else cfg.alpha_max = parse_double(key, v);
  } else if (key == "beta1") cfg.beta1 = parse_double(key, v);
  else if (key == "beta2") cfg.beta2 = parse_double(key, v);
  else if (key == "eps_hat") cfg.eps_hat = parse_double(key, v);
  else if (key == "eval_every") cfg.eval_every = parse_uint(key, v);
  else if (key == "loss_threshold") cfg.loss_threshold = parse_double(key, v);
  else if (key == "timing") cfg.timing = parse_bool(key, v);
  else if (key == "out") cfg.out = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_text(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  for (const auto &raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path &path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::unique_ptr<Problem> build_problem(const RunConfig &cfg) {
  const auto &p = cfg.problem;
  const std::uint64_t data_seed = derive_seed(cfg.seed, SeedStream::Data);
  if (p.kind == "quadratic") {
    const auto n = static_cast<Eigen::Index>(p.quad_diag.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) A(i, i) = p.quad_diag[static_cast<std::size_t>(i)];
    std::optional<Vector> x0;
    if (!p.x0.empty()) x0 = Eigen::Map<const Vector>(p.x0.data(), n);
    return quadratic_problem(std::move(A), Vector::Zero(n), x0);
  }
  if (p.kind == "rosenbrock") return rosenbrock_problem();
  if (p.kind == "logistic") return logistic_problem(p.n_samples, p.dim, data_seed, p.separation);

  std::vector<std::size_t> sizes;
  Dataset data;
  if (p.kind == "mlp-blobs") {
    data = synthetic_blobs(p.n_samples, p.dim, p.num_classes, data_seed, p.separation);
  } else {
    const auto dir = locate_mnist(p.mnist_dir.empty() ? std::nullopt
                                                      : std::optional<std::filesystem::path>(p.mnist_dir));
    if (!dir) throw DataMissing("MNIST directory not given (use --mnist-dir or MNIST_DIR)");
    const Dataset full = load_mnist(*dir, true);
    if (p.subset > full.size()) throw ConfigError("subset exceeds MNIST size");
    data = mnist_subset(full, p.subset, derive_seed(cfg.seed, SeedStream::Subset));
  }
  sizes.push_back(data.dim());
  sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
  sizes.push_back(static_cast<std::size_t>(data.num_classes));
  return mlp_problem(std::move(sizes), std::move(data));
}

// ------------------------------------------------------------------ trace

double Trace::final_full_loss() const { return records.empty() ? initial_full_loss : records.back().full_loss; }

double Trace::min_full_grad_norm() const {
  double best = initial_full_grad_norm;
  for (const auto &r : records) {
    if (!std::isnan(r.full_grad_norm)) best = std::min(best, r.full_grad_norm);
  }
  return best;
}

double Trace::steps_to_threshold(double threshold) const {
  if (initial_full_loss <= threshold) return 0.0;
  for (const auto &r : records) {
    if (!std::isnan(r.full_loss) && r.full_loss <= threshold) return static_cast<double>(r.step);
  }
  return kInf;
}

std::size_t Trace::revert_count() const {
  std::size_t n = 0;
  for (const auto &r : records) {
    for (const auto &v : r.vectors) n += v.reverted ? 1 : 0;
  }
  return n;
}

// ------------------------------------------------------------------ run

Trace run(const RunConfig &cfg) {
  validate(cfg);
  const auto problem = build_problem(cfg);
  return run_on(*problem, cfg);
}

Trace run_on(const Problem &problem, const RunConfig &cfg) {
  validate(cfg);
  using clock = std::chrono::steady_clock;

  const auto blocks = problem.blocks();
  const ClampRange clamp = effective_clamp(cfg);
  const bool scheduled = cfg.optimizer == OptimizerKind::Dbd || cfg.optimizer == OptimizerKind::Rdbd ||
                         cfg.optimizer == OptimizerKind::AdamRdbd;
  const double eta = scheduled ? cfg.eta : 0.0;

  Trace trace;
  trace.config = cfg;
  trace.run_id = cfg.display_label() + "/seed=" + std::to_string(cfg.seed);
  std::vector<ScheduleState> sched;
  std::vector<AdamState> adam;
  for (const auto &b : blocks) {
    trace.vector_ids.push_back(b.id);
    sched.push_back(ScheduleState::fresh(b.size, cfg.alpha0, eta, scheduled ? clamp : ClampRange::disabled()));
    adam.push_back(AdamState::fresh(b.size, cfg.beta1, cfg.beta2, cfg.eps_hat));
  }

  Vector x = problem.initial_point(derive_seed(cfg.seed, SeedStream::Init));
  std::optional<BatchSampler> sampler;
  if (problem.stochastic()) {
    if (cfg.batch_size > problem.num_samples()) throw ConfigError("batch_size exceeds the number of samples");
    sampler.emplace(problem.num_samples(), cfg.batch_size, derive_seed(cfg.seed, SeedStream::Batches));
  }
  const std::vector<std::size_t> whole = {0};

  const auto fail = [&](const std::string &why) {
    if (!cfg.out.empty()) write_trace_csv(trace, cfg.out);
    throw NumericFailure(why, trace);
  };

  {
    Vector g0;
    std::vector<std::size_t> all(problem.num_samples());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    trace.initial_full_loss = problem.batch_loss_and_gradient(x, all, g0);
    trace.initial_full_grad_norm = g0.norm();
  }

  std::vector<std::size_t> all_rows(problem.num_samples());
  for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;

  Vector grad;
  trace.records.reserve(cfg.steps);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const auto started = clock::now();
    const std::span<const std::size_t> batch = sampler ? sampler->next() : std::span<const std::size_t>(whole);

    TraceRecord rec;
    rec.step = t;
    rec.full_loss = kNaN;
    rec.full_grad_norm = kNaN;
    rec.loss = problem.batch_loss_and_gradient(x, batch, grad);
    if (!std::isfinite(rec.loss) || !grad.allFinite()) {
      fail("non-finite loss or gradient at step " + std::to_string(t));
    }

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto off = static_cast<Eigen::Index>(blocks[b].offset);
      const auto len = static_cast<Eigen::Index>(blocks[b].size);
      const ParamVector pv(blocks[b].id, x.segment(off, len));
      const GradientEstimate ge(grad.segment(off, len), t);
      VectorRecord vr;

      switch (cfg.optimizer) {
      case OptimizerKind::Sgd: {
        const StepOutcome o = scheduled_step(SchedulerKind::Plain, sched[b], pv, ge);
        x.segment(off, len) = o.new_values;
        vr = {ge.norm(), o.new_alpha, o.h, false};
        break;
      }
      case OptimizerKind::Dbd:
      case OptimizerKind::Rdbd: {
        const auto kind = cfg.optimizer == OptimizerKind::Dbd ? SchedulerKind::Dbd : SchedulerKind::Rdbd;
        const StepOutcome o = scheduled_step(kind, sched[b], pv, ge);
        x.segment(off, len) = o.new_values;
        vr = {ge.norm(), o.new_alpha, o.h, o.reverted};
        break;
      }
      case OptimizerKind::Adam: {
        const AdamResult r = adam_step(adam[b], pv, ge, cfg.alpha0);
        const double h = r.direction.dot(sched[b].prev_update);
        sched[b].prev_update = r.direction;
        sched[b].prev_dot = h;
        ++sched[b].step;
        x.segment(off, len) = r.new_values;
        vr = {r.direction.norm(), cfg.alpha0, h, false};
        break;
      }
      case OptimizerKind::AdamRdbd: {
        const StepOutcome o = adam_rdbd_step(adam[b], sched[b], pv, ge);
        x.segment(off, len) = o.new_values;
        vr = {sched[b].prev_update.norm(), o.new_alpha, o.h, o.reverted};
        break;
      }
      }
      rec.vectors.push_back(vr);
    }

    if (!x.allFinite()) {
      trace.records.push_back(rec);
      fail("non-finite weights after step " + std::to_string(t));
    }
    if (t % cfg.eval_every == 0 || t == cfg.steps) {
      Vector full_grad;
      rec.full_loss = problem.batch_loss_and_gradient(x, all_rows, full_grad);
      rec.full_grad_norm = full_grad.norm();
      if (!std::isfinite(rec.full_loss)) {
        trace.records.push_back(rec);
        fail("non-finite full loss after step " + std::to_string(t));
      }
    }
    rec.wall_ms =
        cfg.timing ? std::chrono::duration<double, std::milli>(clock::now() - started).count() : 0.0;
    trace.records.push_back(std::move(rec));
  }

  if (!cfg.out.empty()) write_trace_csv(trace, cfg.out);
  return trace;
}

void write_trace_csv(const Trace &trace, std::ostream &out) {
  out << "step,loss,full_loss,full_grad_norm";
  for (const auto &id : trace.vector_ids) {
    out << ",grad_norm:" << id << ",alpha:" << id << ",h:" << id << ",reverted:" << id;
  }
  out << ",wall_ms\n";
  for (const auto &r : trace.records) {
    out << r.step << ',' << fmt_double(r.loss) << ',' << fmt_double(r.full_loss) << ','
        << fmt_double(r.full_grad_norm);
    for (const auto &v : r.vectors) {
      out << ',' << fmt_double(v.grad_norm) << ',' << fmt_double(v.alpha) << ',' << fmt_double(v.h) << ','
          << (v.reverted ? 1 : 0);
    }
    out << ',' << fmt_double(r.wall_ms) << '\n';
  }
}

void write_trace_csv(const Trace &trace, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_trace_csv(trace, out);
}

// ------------------------------------------------------------------ compare

std::string_view to_string(Metric m) {
  switch (m) {
  case Metric::FinalLoss:
    return "final_loss";
  case Metric::StepsToThreshold:
    return "steps_to_threshold";
  case Metric::MinGradNorm:
    return "min_grad_norm";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  const std::string s = trim(name);
  if (s == "final_loss") return Metric::FinalLoss;
  if (s == "steps_to_threshold") return Metric::StepsToThreshold;
  if (s == "min_grad_norm") return Metric::MinGradNorm;
  throw ConfigError("unknown metric '" + s + "'");
}

double metric_value(const Trace &trace, Metric m) {
  switch (m) {
  case Metric::FinalLoss:
    return trace.final_full_loss();
  case Metric::StepsToThreshold:
    return trace.steps_to_threshold(trace.config.loss_threshold);
  case Metric::MinGradNorm:
    return trace.min_full_grad_norm();
  }
  return kNaN;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  if (lo == hi || values[lo] == values[hi]) return values[lo];
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ComparisonTable summarize(const std::vector<Trace> &traces, Metric metric) {
  if (traces.empty()) throw ConfigError("nothing to compare");
  const ProblemSpec &problem = traces.front().config.problem;
  std::map<std::string, std::map<std::uint64_t, double>> by_label;
  std::vector<std::string> order;
  for (const auto &t : traces) {
    if (!(t.config.problem == problem)) throw ConfigError("compared runs use different problems");
    const std::string label = t.config.display_label();
    if (!by_label.contains(label)) order.push_back(label);
    if (!by_label[label].emplace(t.config.seed, metric_value(t, metric)).second) {
      throw ConfigError("duplicate seed " + std::to_string(t.config.seed) + " for '" + label + "'");
    }
  }

  ComparisonTable table;
  table.metric = metric;
  for (const auto &[seed, _] : by_label[order.front()]) table.seeds.push_back(seed);
  double best = kInf;
  for (const auto &label : order) {
    const auto &vals = by_label[label];
    std::vector<std::uint64_t> seeds;
    ComparisonRow row;
    row.label = label;
    for (const auto &[seed, v] : vals) {
      seeds.push_back(seed);
      row.values.push_back(v);
    }
    if (seeds != table.seeds) throw ConfigError("label '" + label + "' covers a different seed set");
    row.median = median_of(row.values);
    row.q1 = quantile(row.values, 0.25);
    row.q3 = quantile(row.values, 0.75);
    if (row.median < best || table.winner.empty()) {
      if (row.median < best) best = row.median;
      if (table.winner.empty() || row.median <= best) table.winner = label;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ComparisonTable compare(const std::vector<RunConfig> &configs, Metric metric, std::vector<Trace> *traces_out) {
  if (configs.empty()) throw ConfigError("nothing to compare");
  for (const auto &c : configs) {
    if (!(c.problem == configs.front().problem)) throw ConfigError("compared configs use different problems");
  }
  std::vector<Trace> traces;
  traces.reserve(configs.size());
  for (const auto &c : configs) traces.push_back(run(c));
  ComparisonTable table = summarize(traces, metric);
  if (traces_out) *traces_out = std::move(traces);
  return table;
}

void write_comparison_csv(const ComparisonTable &table, std::ostream &out) {
  out << "label,metric,n_seeds,median,q1,q3,iqr,winner\n";
  for (const auto &r : table.rows) {
    out << r.label << ',' << to_string(table.metric) << ',' << r.values.size() << ',' << fmt_double(r.median)
        << ',' << fmt_double(r.q1) << ',' << fmt_double(r.q3) << ',' << fmt_double(r.iqr()) << ','
        << (r.label == table.winner ? 1 : 0) << '\n';
  }
}

std::string format_comparison(const ComparisonTable &table) {
  std::ostringstream os;
  os << "metric: " << to_string(table.metric) << " over " << table.seeds.size() << " seed(s)\n";
  os << std::left << std::setw(16) << "label" << std::right << std::setw(14) << "median" << std::setw(14)
     << "q1" << std::setw(14) << "q3" << std::setw(14) << "iqr" << '\n';
  for (const auto &r : table.rows) {
    os << std::left << std::setw(16) << r.label << std::right << std::setprecision(6) << std::setw(14)
       << r.median << std::setw(14) << r.q1 << std::setw(14) << r.q3 << std::setw(14) << r.iqr()
       << (r.label == table.winner ? "  *" : "") << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------------ plot data

std::size_t emit_plot_data(const std::vector<Trace> &traces, const std::filesystem::path &out_path,
                           const std::vector<std::string> &series) {
  if (traces.empty()) throw std::invalid_argument("emit_plot_data needs at least one trace");
  const auto wanted = [&](const std::string &name) {
    if (series.empty()) return true;
    const std::string base = name.substr(0, name.find(':'));
    return std::find(series.begin(), series.end(), name) != series.end() ||
           std::find(series.begin(), series.end(), base) != series.end();
  };

  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  out << "run_id,step,series,value\n";
  std::size_t rows = 0;
  for (const auto &t : traces) {
    // Column-wise extraction so that each series is emitted contiguously.
    std::vector<std::pair<std::string, std::function<double(const TraceRecord &)>>> cols = {
        {"loss", [](const TraceRecord &r) { return r.loss; }},
        {"full_loss", [](const TraceRecord &r) { return r.full_loss; }},
        {"full_grad_norm", [](const TraceRecord &r) { return r.full_grad_norm; }},
    };
    for (std::size_t v = 0; v < t.vector_ids.size(); ++v) {
      const std::string &id = t.vector_ids[v];
      cols.push_back({"alpha:" + id, [v](const TraceRecord &r) { return r.vectors[v].alpha; }});
      cols.push_back({"grad_norm:" + id, [v](const TraceRecord &r) { return r.vectors[v].grad_norm; }});
      cols.push_back({"h:" + id, [v](const TraceRecord &r) { return r.vectors[v].h; }});
      cols.push_back(
          {"reverted:" + id, [v](const TraceRecord &r) { return r.vectors[v].reverted ? 1.0 : 0.0; }});
    }
    for (const auto &[name, get] : cols) {
      if (!wanted(name)) continue;
      for (const auto &r : t.records) {
        const double value = get(r);
        if (!std::isfinite(value)) continue;
        out << t.run_id << ',' << r.step << ',' << name << ',' << fmt_double(value) << '\n';
        ++rows;
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing " + out_path.string());
  return rows;
}

std::vector<PlotRow> parse_plot_data(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "run_id,step,series,value") throw std::runtime_error("unexpected plot-data header");
  std::vector<PlotRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw std::runtime_error("malformed plot-data row: " + line);
    rows.push_back({f[0], static_cast<std::size_t>(std::stoull(f[1])), f[2], std::stod(f[3])});
  }
  return rows;
}

// ------------------------------------------------------------------ presets

const std::vector<Preset> &presets() {
  static const std::vector<Preset> all = [] {
    std::vector<Preset> v;

    RunConfig mnist;
    mnist.problem.kind = "mlp-mnist";
    mnist.problem.hidden = {128, 64};
    mnist.problem.subset = 2048;
    mnist.optimizer = OptimizerKind::Rdbd;
    mnist.alpha0 = 0.005;
    mnist.eta = 0.01;
    mnist.batch_size = 16;
    mnist.steps = 3750;
    v.push_back({"mnist-default", "MLP 784-128-64-10 on a 2048-sample MNIST subset, RDBD", mnist, {}, false});

    Preset lr{"lr-robustness", "RDBD on the MNIST MLP across initial learning rates", mnist,
              SweepSpec{"alpha0", {0.01, 0.005, 0.001, 0.0005, 0.0001}}, false};
    v.push_back(lr);

    RunConfig logistic;
    logistic.problem.kind = "logistic";
    logistic.problem.n_samples = 2048;
    logistic.problem.dim = 20;
    logistic.optimizer = OptimizerKind::Rdbd;
    logistic.alpha0 = 0.005;
    logistic.eta = 0.01;
    logistic.batch_size = 16;
    logistic.steps = 2000;
    v.push_back({"logistic-default", "Binary logistic regression on Gaussian blobs, RDBD", logistic, {}, false});

    RunConfig adam = logistic;
    adam.optimizer = OptimizerKind::AdamRdbd;
    adam.eta = 5e-7;
    adam.beta1 = 0.05;
    adam.beta2 = 0.99;
    adam.alpha_max = 0.05;
    v.push_back({"logistic-adam-rdbd", "Adam with an RDBD-scheduled rate on the logistic problem", adam, {}, false});

    RunConfig bs = logistic;
    bs.steps = 1280;
    v.push_back({"batch-size-impact", "RDBD on the logistic problem across batch sizes", bs,
                 SweepSpec{"batch_size", {16, 32, 64, 128}}, false});

    RunConfig quad;
    quad.problem.kind = "quadratic";
    quad.problem.quad_diag = {1.0, 2.0};
    quad.problem.x0 = {1.0, std::sqrt(0.5)};
    quad.optimizer = OptimizerKind::Dbd;
    quad.alpha0 = 0.5;                        // 1 / L
    quad.eta = 0.5 / (534.0 * 4.0 * 2.0);     // gamma / (T sigma^2 L), sigma^2 = 2 L f_gap
    quad.steps = 534;
    quad.eval_every = 1;
    quad.clamp = false;
    v.push_back({"quadratic-theory", "Full-batch DBD on diag(1,2) with the convergence-theorem settings", quad,
                 {}, false});

    RunConfig rosen;
    rosen.problem.kind = "rosenbrock";
    rosen.optimizer = OptimizerKind::Rdbd;
    rosen.alpha0 = 1e-3;
    rosen.eta = 1e-9;
    rosen.steps = 5000;
    rosen.eval_every = 50;
    v.push_back({"rosenbrock", "Full-batch RDBD on the Rosenbrock valley", rosen, {}, false});

    RunConfig cifar = mnist;
    cifar.steps = 3125;
    v.push_back({"cifar-default", "reserved: CIFAR-10 CNN is not part of this build", cifar, {}, true});
    return v;
  }();
  return all;
}

const Preset &find_preset(std::string_view name) {
  for (const auto &p : presets()) {
    if (p.name == name) {
      if (p.reserved) throw ConfigError("preset '" + p.name + "' is reserved and not implemented");
      return p;
    }
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<Trace> run_sweep(const RunConfig &base, const SweepSpec &sweep, const std::vector<std::uint64_t> &seeds) {
  if (sweep.values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<Trace> traces;
  for (double value : sweep.values) {
    RunConfig cfg = base;
    std::ostringstream tag;
    tag << sweep.param << '=' << value;
    if (sweep.param == "alpha0") cfg.alpha0 = value;
    else if (sweep.param == "eta") cfg.eta = value;
    else if (sweep.param == "batch_size") {
      if (value < 1 || value != std::floor(value)) throw ConfigError("batch_size sweep values must be integers");
      cfg.batch_size = static_cast<std::size_t>(value);
    } else throw ConfigError("cannot sweep '" + sweep.param + "'");
    cfg.label = tag.str();
    for (auto seed : seeds) {
      cfg.seed = seed;
      traces.push_back(run(cfg));
    }
  }
  return traces;
}

// ------------------------------------------------------------------ run checks

BoundReport check_alpha_envelope(const Trace &trace, double slack) {
  BoundReport r;
  r.name = "alpha_envelope";
  r.satisfied = true;
  r.margin = kInf;
  const double alpha0 = trace.config.alpha0;
  const bool scheduled = trace.config.optimizer == OptimizerKind::Dbd ||
                         trace.config.optimizer == OptimizerKind::Rdbd ||
                         trace.config.optimizer == OptimizerKind::AdamRdbd;
  const double eta = scheduled ? trace.config.eta : 0.0;
  for (std::size_t v = 0; v < trace.vector_ids.size(); ++v) {
    double max_norm = 0.0;
    for (const auto &rec : trace.records) {
      max_norm = std::max(max_norm, rec.vectors[v].grad_norm);
      const auto [lo, hi] = alpha_envelope(alpha0, eta, max_norm, rec.step);
      const double width = hi - alpha0;
      const double dev = std::abs(rec.vectors[v].alpha - alpha0);
      const double margin = width - dev;
      if (margin < r.margin) {
        r.margin = margin;
        r.theoretical_value = width;
        r.empirical_value = dev;
      }
      if (dev > width + slack) r.satisfied = false;
    }
  }
  return r;
}

BoundReport check_revert_consistency(const Trace &trace) {
  BoundReport r;
  r.name = "revert_sign_flip";
  r.satisfied = true;
  for (std::size_t v = 0; v < trace.vector_ids.size(); ++v) {
    double prev_h = 0.0;
    for (const auto &rec : trace.records) {
      const auto &vr = rec.vectors[v];
      if (vr.reverted) {
        r.empirical_value += 1.0;
        if (!(vr.h * prev_h < 0.0)) r.satisfied = false;
      }
      prev_h = vr.h;
    }
  }
  return r;
}

DbdConvergenceResult check_dbd_convergence(const QuadraticProblem &problem, const Vector &x0, double gamma,
                                           double epsilon) {
  const auto k = problem.known_constants();
  if (!k.lipschitz_L || !k.f_star || *k.lipschitz_L <= 0.0) {
    throw std::invalid_argument("check_dbd_convergence needs a positive-definite quadratic");
  }
  const QuadraticProblem local(problem.matrix(), problem.linear_term(), x0);
  const double L = *k.lipschitz_L;

  TheoryParams p;
  p.lipschitz_L = L;
  p.gamma = gamma;
  p.epsilon = epsilon;
  p.f_gap = local.loss(x0) - *k.f_star;
  p.sigma = std::sqrt(2.0 * L * p.f_gap);

  DbdConvergenceResult out;
  out.sigma = p.sigma;
  out.horizon = static_cast<std::size_t>(std::ceil(dbd_iteration_bound(p)));

  RunConfig cfg;
  cfg.problem.kind = "quadratic";
  cfg.optimizer = OptimizerKind::Dbd;
  cfg.alpha0 = 1.0 / L;
  cfg.eta = gamma / (static_cast<double>(out.horizon) * p.sigma * p.sigma * L);
  cfg.steps = std::max<std::size_t>(out.horizon, 1);
  cfg.eval_every = 1;
  cfg.clamp = false;
  cfg.timing = false;
  const Trace trace = run_on(local, cfg);

  out.observed_sigma = trace.initial_full_grad_norm;
  double hit = kInf;
  out.min_grad_norm = kInf;
  for (const auto &rec : trace.records) {
    out.observed_sigma = std::max(out.observed_sigma, rec.vectors.front().grad_norm);
    out.min_grad_norm = std::min(out.min_grad_norm, rec.full_grad_norm);
    if (std::isinf(hit) && rec.full_grad_norm <= epsilon) hit = static_cast<double>(rec.step);
  }

  out.report.name = "dbd_convergence";
  out.report.theoretical_value = static_cast<double>(out.horizon);
  out.report.empirical_value = hit;
  out.report.margin = out.report.theoretical_value - hit;
  out.report.satisfied = hit <= out.report.theoretical_value && out.observed_sigma <= out.sigma * (1.0 + 1e-12);
  return out;
}

SteeperDescentResult check_steeper_descent(const QuadraticProblem &problem, const Vector &x0, double alpha0,
                                           double eta, std::size_t steps) {
  SteeperDescentResult out;
  out.report.name = "steeper_descent";
  out.report.theoretical_value = 0.0;
  out.report.empirical_value = -kInf;

  ScheduleState state = ScheduleState::fresh(static_cast<std::size_t>(x0.size()), alpha0, eta,
                                             ClampRange::disabled());
  Vector x = x0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const GradientEstimate g(problem.full_gradient(x), t);
    out.observed_sigma = std::max(out.observed_sigma, g.norm());
    const ParamVector pv("x", x);
    const StepOutcome o = rdbd_step(state, pv, g);

    // Rate after any revert, before this step's increment; clamping is off.
    const double alpha = o.new_alpha - eta * o.h;
    const Vector plain = x - alpha * g.values();
    const Vector scheduled = x - (alpha + eta * o.h) * g.values();
    // The increment eta*h_t survives when the next update agrees in sign: <grad f(x_plain), g_t> * h_t >= 0.
    const double h_next = problem.full_gradient(plain).dot(g.values());
    if (h_next * o.h >= 0.0) {
      const double gap = problem.loss(scheduled) - problem.loss(plain);
      out.report.empirical_value = std::max(out.report.empirical_value, gap);
      ++out.steps_checked;
    } else {
      ++out.steps_skipped;
    }
    x = o.new_values;
  }
  const double L = problem.known_constants().lipschitz_L.value_or(0.0);
  out.eta_condition = L > 0.0 && eta <= 2.0 / (L * out.observed_sigma * out.observed_sigma);
  out.report.applicable = out.eta_condition && out.steps_checked > 0;
  out.report.margin = -out.report.empirical_value;
  out.report.satisfied = out.report.applicable && out.report.empirical_value <= 1e-12;
  return out;
}

} // namespace rdbd
