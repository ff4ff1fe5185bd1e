// rdbd: run, compare and sweep learning-rate schedules; print theory bounds.
//
// Exit codes: 0 ok, 2 configuration error, 3 data missing, 4 numeric failure.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdbd/data.hpp"
#include "rdbd/harness.hpp"
#include "rdbd/theory.hpp"

namespace {

using namespace rdbd;

struct Overrides {
  std::string preset;
  std::string config;
  std::string optimizer;
  std::optional<double> alpha0;
  std::optional<double> eta;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> eval_every;
  std::optional<double> alpha_max;
  std::string mnist_dir;
  bool no_clamp = false;
  bool no_timing = false;
};

void add_common(CLI::App *cmd, Overrides &o) {
  cmd->add_option("--preset", o.preset, "named preset (see `rdbd presets`)");
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--alpha0", o.alpha0, "initial learning rate");
  cmd->add_option("--eta", o.eta, "meta learning rate");
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--steps", o.steps);
  cmd->add_option("--eval-every", o.eval_every, "full-dataset evaluation period");
  cmd->add_option("--alpha-max", o.alpha_max, "upper clamp on the learning rate");
  cmd->add_option("--mnist-dir", o.mnist_dir, "directory holding the MNIST IDX files");
  cmd->add_flag("--no-clamp", o.no_clamp, "disable learning-rate clamping");
  cmd->add_flag("--no-timing", o.no_timing, "write wall_ms = 0 for byte-stable traces");
}

RunConfig resolve(const Overrides &o, std::optional<SweepSpec> *sweep = nullptr) {
  RunConfig cfg;
  if (!o.preset.empty()) {
    const Preset &p = find_preset(o.preset);
    cfg = p.config;
    if (sweep) *sweep = p.sweep;
  }
  if (!o.config.empty()) cfg = load_config_file(o.config, cfg);
  if (!o.optimizer.empty()) cfg.optimizer = parse_optimizer(o.optimizer);
  if (o.alpha0) cfg.alpha0 = *o.alpha0;
  if (o.eta) cfg.eta = *o.eta;
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.steps) cfg.steps = *o.steps;
  if (o.seed) cfg.seed = *o.seed;
  if (o.eval_every) cfg.eval_every = *o.eval_every;
  if (o.alpha_max) cfg.alpha_max = *o.alpha_max;
  if (!o.mnist_dir.empty()) cfg.problem.mnist_dir = o.mnist_dir;
  if (o.no_clamp) cfg.clamp = false;
  if (o.no_timing) cfg.timing = false;
  validate(cfg);
  return cfg;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) seeds.push_back(first + i);
  return seeds;
}

void print_run_summary(const Trace &t) {
  std::cout << t.run_id << ": final_loss=" << t.final_full_loss() << " min_grad_norm=" << t.min_full_grad_norm()
            << " reverts=" << t.revert_count() << '\n';
}

nlohmann::json report_json(const BoundReport &r) {
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"name", r.name},           {"theoretical", num(r.theoretical_value)},
          {"empirical", num(r.empirical_value)}, {"satisfied", r.satisfied},
          {"applicable", r.applicable}, {"margin", num(r.margin)}};
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Delta-bar-delta and regrettable delta-bar-delta learning-rate schedules"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string run_out;
  auto *run_cmd = app.add_subcommand("run", "run one configuration and write its trace CSV");
  add_common(run_cmd, run_o);
  run_cmd->add_option("--optimizer", run_o.optimizer, "sgd | adam | dbd | rdbd | adam_rdbd");
  run_cmd->add_option("--seed", run_o.seed);
  run_cmd->add_option("--out", run_out, "trace CSV path");

  Overrides cmp_o;
  std::vector<std::string> cmp_optimizers = {"sgd", "rdbd"};
  std::size_t cmp_seeds = 5;
  std::uint64_t cmp_first_seed = 1;
  std::string cmp_metric = "final_loss";
  std::string cmp_out;
  std::string cmp_plot;
  auto *cmp_cmd = app.add_subcommand("compare", "run several optimizers over seeds and rank them");
  add_common(cmp_cmd, cmp_o);
  cmp_cmd->add_option("--optimizers", cmp_optimizers, "comma-separated optimizers")->delimiter(',');
  cmp_cmd->add_option("--seeds", cmp_seeds, "number of seeds");
  cmp_cmd->add_option("--first-seed", cmp_first_seed);
  cmp_cmd->add_option("--metric", cmp_metric, "final_loss | steps_to_threshold | min_grad_norm");
  cmp_cmd->add_option("--out", cmp_out, "comparison CSV path");
  cmp_cmd->add_option("--plot-out", cmp_plot, "long-format plot data CSV path");

  Overrides sw_o;
  std::string sw_param;
  std::vector<double> sw_values;
  std::size_t sw_seeds = 3;
  std::string sw_metric = "final_loss";
  std::string sw_out;
  std::string sw_plot;
  auto *sw_cmd = app.add_subcommand("sweep", "sweep one hyperparameter over seeds");
  add_common(sw_cmd, sw_o);
  sw_cmd->add_option("--optimizer", sw_o.optimizer);
  sw_cmd->add_option("--param", sw_param, "alpha0 | eta | batch_size");
  sw_cmd->add_option("--values", sw_values)->delimiter(',');
  sw_cmd->add_option("--seeds", sw_seeds, "number of seeds");
  sw_cmd->add_option("--metric", sw_metric);
  sw_cmd->add_option("--out", sw_out, "comparison CSV path");
  sw_cmd->add_option("--plot-out", sw_plot, "long-format plot data CSV path");

  auto *presets_cmd = app.add_subcommand("presets", "list named presets");

  TheoryParams tp;
  std::size_t horizon = 1000;
  auto *bounds_cmd = app.add_subcommand("bounds", "print iteration bounds and theoretical hyperparameters as JSON");
  bounds_cmd->add_option("--L", tp.lipschitz_L, "smoothness constant");
  bounds_cmd->add_option("--sigma", tp.sigma, "update-norm bound");
  bounds_cmd->add_option("--mu", tp.mu);
  bounds_cmd->add_option("--tau", tp.tau);
  bounds_cmd->add_option("--gamma", tp.gamma);
  bounds_cmd->add_option("--epsilon", tp.epsilon);
  bounds_cmd->add_option("--f-gap", tp.f_gap, "f(x0) - f*");
  bounds_cmd->add_option("--horizon", horizon, "T for the hyperparameter formulas");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) {
      RunConfig cfg = resolve(run_o);
      if (!run_out.empty()) cfg.out = run_out;
      const Trace t = run(cfg);
      if (cfg.out.empty()) write_trace_csv(t, std::cout);
      else print_run_summary(t);
    } else if (cmp_cmd->parsed()) {
      const RunConfig base = resolve(cmp_o);
      std::vector<RunConfig> configs;
      for (const auto &name : cmp_optimizers) {
        for (auto seed : seed_list(cmp_first_seed, cmp_seeds)) {
          RunConfig c = base;
          c.optimizer = parse_optimizer(name);
          c.label = std::string(to_string(c.optimizer));
          c.seed = seed;
          c.out.clear();
          configs.push_back(c);
        }
      }
      std::vector<Trace> traces;
      const ComparisonTable table = compare(configs, parse_metric(cmp_metric), &traces);
      std::cout << format_comparison(table);
      if (!cmp_out.empty()) {
        std::ofstream f(cmp_out);
        write_comparison_csv(table, f);
      }
      if (!cmp_plot.empty()) emit_plot_data(traces, cmp_plot);
    } else if (sw_cmd->parsed()) {
      std::optional<SweepSpec> sweep;
      RunConfig base = resolve(sw_o, &sweep);
      if (!sw_param.empty()) sweep = SweepSpec{sw_param, sw_values};
      if (!sweep) throw ConfigError("sweep needs --param and --values or a sweep preset");
      base.out.clear();
      const auto traces = run_sweep(base, *sweep, seed_list(base.seed, sw_seeds));
      const ComparisonTable table = summarize(traces, parse_metric(sw_metric));
      std::cout << format_comparison(table);
      if (!sw_out.empty()) {
        std::ofstream f(sw_out);
        write_comparison_csv(table, f);
      }
      if (!sw_plot.empty()) emit_plot_data(traces, sw_plot);
    } else if (presets_cmd->parsed()) {
      for (const auto &p : presets()) {
        std::cout << p.name << (p.reserved ? " (reserved)" : "") << "  " << p.description << '\n';
      }
    } else if (bounds_cmd->parsed()) {
      const auto errs = validate_theory_params(tp);
      if (!errs.empty()) {
        for (const auto &e : errs) std::cerr << "error: " << e << '\n';
        return 2;
      }
      const auto hp = rdbd_theoretical_hyperparams(tp, horizon);
      const auto [lo, hi] = alpha_envelope(hp.alpha0, hp.eta, tp.sigma, horizon);
      nlohmann::json j;
      j["dbd_iteration_bound"] = dbd_iteration_bound(tp);
      if (tp.gamma > 0.0) j["rdbd_iteration_bound"] = rdbd_iteration_bound(tp);
      j["horizon"] = horizon;
      j["alpha0"] = hp.alpha0;
      j["eta"] = hp.eta;
      j["alpha_envelope"] = {lo, hi};
      j["descent_coefficient"] = report_json(descent_coefficient_bound(hp.alpha0, tp.lipschitz_L, tp.gamma));
      const auto sd = steeper_descent_conditions(tp, hp.eta, hp.alpha0);
      j["steeper_descent"] = {{"eta_ok", sd.eta_ok}, {"alpha_ok", sd.alpha_ok}};
      std::cout << j.dump(2) << '\n';
    }
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataMissing &e) {
    std::cerr << "data missing: " << e.what() << '\n';
    return 3;
  } catch (const NumericFailure &e) {
    std::cerr << "numeric failure: " << e.what() << " (" << e.partial().records.size() << " steps recorded)\n";
    return 4;
  } catch (const std::invalid_argument &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
