#include "busoff/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "busoff/linalg.hpp"

#ifndef BUSOFF_VERSION
#define BUSOFF_VERSION "unknown"
#endif

namespace busoff::cli {
namespace fs = std::filesystem;

namespace {

// Human summaries only; data files keep 17 significant digits.
std::string num(double v) { return fmt::format("{:.6g}", v); }

Cell opt_cell(const std::optional<double>& v) {
  if (v) return *v;
  return std::monostate{};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ValidationError("cannot create output directory " + dir.string() +
                          (ec ? ": " + ec.message() : std::string()));
  }
}

/// Collects the names of files a command writes and records them in the
/// manifest.
class Outputs {
 public:
  explicit Outputs(const RunConfig& cfg) : cfg_(cfg) { prepare_out_dir(cfg.out_dir); }

  void table(const Table& t, std::string_view stem) {
    files_.push_back(write_table(t, cfg_.out_dir, stem, cfg_.format).filename().string());
  }

  void manifest(const std::vector<std::uint64_t>& seeds) const {
    Json m;
    m["tool"] = "busoff";
    m["version"] = BUSOFF_VERSION;
    m["subcommand"] = cfg_.subcommand;
    m["config"] = cfg_.json;
    m["seeds"] = seeds;
    m["outputs"] = files_;
    const fs::path path = cfg_.out_dir / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    os << m.dump(2) << '\n';
    if (!os) throw ValidationError("failed writing " + path.string());
  }

 private:
  const RunConfig& cfg_;
  std::vector<std::string> files_;
};

void add_matrix_rows(Table& t, std::vector<Cell> prefix, const std::string& name,
                     const Eigen::MatrixXd& M) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      std::vector<Cell> row = prefix;
      row.insert(row.end(), {name, static_cast<long long>(i),
                             static_cast<long long>(j), M(i, j)});
      t.add_row(std::move(row));
    }
  }
}

void print_matrix(std::ostream& out, const std::string& name,
                  const Eigen::MatrixXd& M) {
  out << name << " =\n";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    out << "  [";
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      out << (j ? ", " : "") << num(M(i, j));
    }
    out << "]\n";
  }
}

CostSpec stationary_cost(const RunConfig& cfg) {
  CostSpec c = cfg.cost;
  c.horizon.reset();
  return c;
}

/// Game plus, for the ACC model, the scenario needed to rebuild kinematics.
struct Prepared {
  GameConfig game;
  std::optional<acc::AccSetup> acc;
};

Prepared prepare_game(const RunConfig& cfg, double p) {
  Prepared prep;
  if (cfg.model == ModelKind::Acc) {
    prep.acc = acc::make_acc_setup(p, cfg.acc);
    prep.game = prep.acc->game;
    prep.game.continue_after_busoff = cfg.continue_after_busoff;
    return prep;
  }
  GameConfig& g = prep.game;
  g.sys = cfg.sys;
  g.cost = cfg.cost;
  g.cost.horizon = cfg.horizon;
  g.tx = TransmissionPolicy(p);
  g.attacker = cfg.attacker(p);
  g.counter = cfg.counter;
  g.x0 = cfg.x0;
  g.horizon = cfg.horizon;
  g.continue_after_busoff = cfg.continue_after_busoff;
  if (cfg.controller == "stationary") {
    g.controller = StationaryGain{
        stationary_policy(cfg.sys, stationary_cost(cfg), p, cfg.attacker_kind,
                          cfg.synthesis)
            .K};
  } else if (cfg.controller == "ladder") {
    if (cfg.attacker_kind == AttackerKind::ClosedLoop) {
      g.controller = TimeVaryingGains{backward_closed_loop(g.sys, g.cost, p).gains};
    } else {
      g.controller = TimeVaryingGains{
          backward_bernoulli(g.sys, g.cost, effective_arrival(cfg.attacker_kind, p))
              .gains};
    }
  }
  return prep;
}

MonteCarloOptions mc_options(const RunConfig& cfg, const Prepared& prep) {
  MonteCarloOptions opts;
  opts.threads = cfg.threads;
  if (prep.acc) {
    const acc::AccParams params = prep.acc->options.params;
    const acc::BrakeScenario scn = prep.acc->options.scenario;
    opts.crashed = [params, scn](const EpisodeTrace& tr) {
      const auto kin = acc::reconstruct(tr, params, scn);
      return std::any_of(kin.gap.begin(), kin.gap.end(),
                         [](double g) { return g < 0.0; });
    };
  }
  return opts;
}

Table trace_table(const EpisodeTrace& tr, Eigen::Index n, Eigen::Index m,
                  const acc::AccKinematics* kin) {
  Table t;
  t.columns.push_back("t");
  for (Eigen::Index i = 0; i < n; ++i) t.columns.push_back(fmt::format("x{}", i));
  for (Eigen::Index i = 0; i < m; ++i) t.columns.push_back(fmt::format("u{}", i));
  for (const char* c : {"alpha", "beta", "applied", "S", "stage_cost"}) {
    t.columns.push_back(c);
  }
  if (kin) {
    for (const char* c : {"gap_actual", "v_ego", "v_lead"}) t.columns.push_back(c);
  }
  for (std::size_t k = 0; k < tr.steps.size(); ++k) {
    const StepRecord& s = tr.steps[k];
    std::vector<Cell> row;
    row.reserve(t.columns.size());
    row.push_back(static_cast<long long>(s.t));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(s.x(i));
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(s.u(i));
    row.push_back(static_cast<long long>(s.alpha));
    row.push_back(static_cast<long long>(s.beta));
    row.push_back(static_cast<long long>(s.applied));
    row.push_back(static_cast<long long>(s.S));
    row.push_back(s.stage_cost);
    if (kin) {
      row.push_back(kin->gap[k]);
      row.push_back(kin->v_ego[k]);
      row.push_back(kin->v_lead[k]);
    }
    t.add_row(std::move(row));
  }
  return t;
}

std::vector<std::uint64_t> traced_seeds(const RunConfig& cfg) {
  const auto all = cfg.seeds();
  switch (cfg.traces) {
    case TraceMode::None: return {};
    case TraceMode::First: return {all.front()};
    case TraceMode::All: return all;
  }
  return {};
}

void write_traces(const RunConfig& cfg, const Prepared& prep, Outputs& outputs,
                  const std::string& prefix) {
  const Eigen::Index n = prep.game.sys.states();
  const Eigen::Index m = prep.game.sys.inputs();
  for (std::uint64_t seed : traced_seeds(cfg)) {
    const EpisodeTrace tr = run_episode(prep.game, seed);
    std::optional<acc::AccKinematics> kin;
    if (prep.acc) {
      kin = acc::reconstruct(tr, prep.acc->options.params, prep.acc->options.scenario);
    }
    outputs.table(trace_table(tr, n, m, kin ? &*kin : nullptr),
                  fmt::format("{}trace_seed_{}", prefix, seed));
  }
}

std::optional<double> analytic_busoff_step(const RunConfig& cfg, double p) {
  try {
    return expected_busoff_step(TransmissionPolicy(p), cfg.attacker(p), cfg.counter);
  } catch (const InfiniteHittingTimeError&) {
    return std::nullopt;
  }
}

}  // namespace

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  const double p = *cfg.p;
  const CostSpec cost = stationary_cost(cfg);
  const double rho = effective_arrival(cfg.attacker_kind, p);
  const StabilityReport report =
      riccati_fixed_point(cfg.sys, cost, rho, cfg.synthesis);

  Table residuals;
  residuals.columns = {"iter", "residual"};
  for (std::size_t j = 0; j < report.residuals.size(); ++j) {
    residuals.add_row({static_cast<long long>(j + 1), report.residuals[j]});
  }
  outputs.table(residuals, "residuals");

  Table summary;
  summary.columns = {"p", "attacker", "rho", "status", "iterations",
                     "final_residual", "rho_min_lower", "rho_min_upper", "c"};
  const bool has_last = !report.residuals.empty();
  const Cell last = has_last ? Cell(report.residuals.back()) : Cell(std::monostate{});

  if (!report.converged()) {
    summary.add_row({p, cfg.attacker_name, rho,
                     std::string(to_string(report.status)),
                     static_cast<long long>(report.iterations), last,
                     report.rho_min_lower, report.rho_min_upper,
                     std::monostate{}});
    outputs.table(summary, "synthesis");
    outputs.manifest({});
    out << fmt::format(
        "synth: modified Riccati iteration {} at rho = {} after {} iterations\n"
        "  spectral bounds on rho_min: [{}, {}]; choose p with p(1-p) above "
        "rho_min\n",
        to_string(report.status), num(rho), report.iterations,
        num(report.rho_min_lower), num(report.rho_min_upper));
    return kDiverged;
  }

  const StationaryPolicy pol =
      stationary_policy(cfg.sys, cost, p, cfg.attacker_kind, cfg.synthesis);
  summary.add_row({p, cfg.attacker_name, rho, std::string(to_string(report.status)),
                   static_cast<long long>(report.iterations), last,
                   report.rho_min_lower, report.rho_min_upper, pol.c});
  outputs.table(summary, "synthesis");

  Table mats;
  mats.columns = {"name", "row", "col", "value"};
  add_matrix_rows(mats, {}, "K", pol.K);
  add_matrix_rows(mats, {}, "P", pol.P);
  add_matrix_rows(mats, {}, "P1", pol.P1);
  if (pol.P2) add_matrix_rows(mats, {}, "P2", *pol.P2);
  outputs.table(mats, "matrices");

  if (cfg.cost.horizon) {
    Table ladder;
    ladder.columns = {"k", "name", "row", "col", "value"};
    if (cfg.attacker_kind == AttackerKind::ClosedLoop) {
      const RiccatiLadder lad = backward_closed_loop(cfg.sys, cfg.cost, p);
      for (std::size_t k = 0; k < lad.stages.size(); ++k) {
        const std::vector<Cell> pre{static_cast<long long>(k)};
        if (k < lad.gains.size()) add_matrix_rows(ladder, pre, "K", lad.gains[k]);
        add_matrix_rows(ladder, pre, "P1", lad.stages[k].P1);
        add_matrix_rows(ladder, pre, "P2", lad.stages[k].P2);
        add_matrix_rows(ladder, pre, "c",
                        Eigen::MatrixXd::Constant(1, 1, lad.stages[k].c));
      }
    } else {
      const OpenLoopLadder lad = backward_bernoulli(cfg.sys, cfg.cost, rho);
      for (std::size_t k = 0; k < lad.P.size(); ++k) {
        const std::vector<Cell> pre{static_cast<long long>(k)};
        if (k < lad.gains.size()) add_matrix_rows(ladder, pre, "K", lad.gains[k]);
        add_matrix_rows(ladder, pre, "P", lad.P[k]);
        add_matrix_rows(ladder, pre, "c", Eigen::MatrixXd::Constant(1, 1, lad.c[k]));
      }
    }
    outputs.table(ladder, "ladder");
  }
  outputs.manifest({});

  out << fmt::format("synth: {} attacker, p = {}, rho = {}\n", cfg.attacker_name,
                     num(p), num(rho));
  out << fmt::format("  converged in {} iterations, final residual {}\n",
                     report.iterations,
                     has_last ? num(report.residuals.back()) : "n/a");
  print_matrix(out, "K", pol.K);
  print_matrix(out, "P", pol.P);
  out << "  average cost per step c = " << num(pol.c) << '\n';
  return kOk;
}

int cmd_hitting_time(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  Table t;
  t.columns = {"p", "q", "expected_messages", "expected_steps"};
  if (cfg.paper_closed_form) t.columns.push_back("paper_closed_form");

  auto add = [&](std::optional<double> p, double q) {
    double v = std::numeric_limits<double>::infinity();
    if (q > 0.0) {
      v = expected_hitting_time(transition_matrix(cfg.counter, q), cfg.s0);
    }
    std::vector<Cell> row{opt_cell(p), q, v,
                          p ? Cell(expected_steps(v, *p)) : Cell(std::monostate{})};
    if (cfg.paper_closed_form) {
      row.push_back(q > 0.0 ? closed_form_hitting_time(q)
                            : std::numeric_limits<double>::infinity());
    }
    t.add_row(std::move(row));
  };
  if (!cfg.ht_p.empty()) {
    for (double p : cfg.ht_p) {
      add(p, attacker_collision_probability(TransmissionPolicy(p), cfg.attacker(p)));
    }
  } else {
    for (double q : cfg.ht_q) add(cfg.p, q);
  }
  outputs.table(t, "hitting_time");
  outputs.manifest({});

  out << fmt::format("hitting-time: e+ = {}, e- = {}, e_bar = {}, s0 = {}; {} rows\n",
                     cfg.counter.e_plus, cfg.counter.e_minus, cfg.counter.e_bar,
                     cfg.s0, t.rows.size());
  out << fmt::format("  counter drift is negative for q < {}\n",
                     num(zero_drift_probability(cfg.counter)));
  return kOk;
}

int cmd_rho_min(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  const RhoMinBounds b = rho_min_bounds(cfg.sys.A);
  Table t;
  t.columns = {"rho_min_lower", "rho_min_upper", "rho_min_empirical", "tol_rho",
               "p_low", "p_high"};
  std::optional<double> emp;
  std::string why;
  try {
    emp = rho_min_empirical(cfg.sys, stationary_cost(cfg), cfg.tol_rho, cfg.synthesis);
  } catch (const ValidationError& e) {
    why = e.what();
  }
  std::vector<Cell> row{b.lower, b.upper, opt_cell(emp), cfg.tol_rho};
  // p(1 - p) > rho holds on (p_low, p_high).
  if (emp && *emp < 0.25) {
    const double s = std::sqrt(1.0 - 4.0 * *emp);
    row.push_back(0.5 * (1.0 - s));
    row.push_back(0.5 * (1.0 + s));
  } else {
    row.push_back(std::monostate{});
    row.push_back(std::monostate{});
  }
  t.add_row(std::move(row));
  outputs.table(t, "rho_min");
  outputs.manifest({});

  out << fmt::format("rho-min: spectral bounds [{}, {}]\n", num(b.lower), num(b.upper));
  if (!emp) {
    out << "  empirical estimate unavailable: " << why << '\n';
    return kInvalid;
  }
  out << fmt::format("  empirical estimate {} (bisection tolerance {})\n", num(*emp),
                     num(cfg.tol_rho));
  if (*emp >= 0.25) {
    out << "  no p in (0, 1) gives p(1-p) above rho_min\n";
  }
  return kOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  const double p = *cfg.p;
  const Prepared prep = prepare_game(cfg, p);
  const MonteCarloSummary s =
      monte_carlo(prep.game, cfg.n_seeds, cfg.base_seed, mc_options(cfg, prep));

  Table t;
  t.columns = {"row", "seed", "total_cost", "total_cost_stderr", "xi",
               "bused_off", "crashed", "diverged", "max_counter"};
  std::vector<double> counters;
  for (const auto& o : s.outcomes) {
    t.add_row({std::string("seed"), static_cast<long long>(o.seed), o.total_cost,
               std::monostate{},
               o.xi ? Cell(static_cast<long long>(*o.xi)) : Cell(std::monostate{}),
               static_cast<long long>(o.xi.has_value()),
               static_cast<long long>(o.crashed),
               static_cast<long long>(o.diverged_at.has_value()),
               static_cast<long long>(o.max_counter)});
    counters.push_back(o.max_counter);
  }
  t.add_row({std::string("aggregate"), std::monostate{}, s.mean_cost, s.stderr_cost,
             opt_cell(s.mean_xi), s.busoff_frequency, s.crash_frequency,
             s.diverged_frequency, median(counters)});
  outputs.table(t, "summary");
  write_traces(cfg, prep, outputs, "");
  outputs.manifest(cfg.seeds());

  out << fmt::format("simulate: {} episodes, p = {}, attacker {}, controller {}\n",
                     s.n_episodes, num(p), cfg.attacker_name, cfg.controller);
  out << fmt::format("  mean cost {} (stderr {})\n", num(s.mean_cost),
                     num(s.stderr_cost));
  out << fmt::format("  bus-off frequency {}", num(s.busoff_frequency));
  if (s.mean_xi) out << fmt::format(", mean bus-off step {}", num(*s.mean_xi));
  out << '\n';
  if (prep.acc) out << fmt::format("  crash frequency {}\n", num(s.crash_frequency));
  return kOk;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  Table t;
  t.columns = {"p", "n_episodes", "mean_cost", "stderr_cost", "busoff_frequency",
               "mean_xi", "expected_xi", "crash_frequency", "diverged_frequency",
               "median_max_counter"};
  out << fmt::format("sweep: {} values of p, {} episodes each, attacker {}\n",
                     cfg.sweep_p.size(), cfg.n_seeds, cfg.attacker_name);
  for (double p : cfg.sweep_p) {
    const Prepared prep = prepare_game(cfg, p);
    const MonteCarloSummary s =
        monte_carlo(prep.game, cfg.n_seeds, cfg.base_seed, mc_options(cfg, prep));
    std::vector<double> counters;
    for (const auto& o : s.outcomes) counters.push_back(o.max_counter);
    t.add_row({p, static_cast<long long>(s.n_episodes), s.mean_cost, s.stderr_cost,
               s.busoff_frequency, opt_cell(s.mean_xi),
               opt_cell(analytic_busoff_step(cfg, p)), s.crash_frequency,
               s.diverged_frequency, median(counters)});
    out << fmt::format("  p = {}: bus-off frequency {}, crash frequency {}\n", num(p),
                       num(s.busoff_frequency), num(s.crash_frequency));
  }
  outputs.table(t, "sweep");
  outputs.manifest(cfg.seeds());
  return kOk;
}

int cmd_acc(const RunConfig& cfg, std::ostream& out) {
  Outputs outputs(cfg);
  const double p = *cfg.p;
  const Prepared prep = prepare_game(cfg, p);
  const auto seeds = cfg.seeds();
  std::vector<acc::SafetyMetrics> metrics(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), cfg.threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    metrics[idx] = acc::run_acc(*prep.acc, seeds[idx]).metrics;
  });

  Table t;
  t.columns = {"row", "seed", "min_gap", "final_gap", "crash_time", "busoff_time",
               "crashed", "bused_off", "max_error_counter"};
  std::vector<double> finals, counters, crash_times, busoff_times;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& m = metrics[i];
    t.add_row({std::string("seed"), static_cast<long long>(seeds[i]), m.min_gap,
               m.final_gap, opt_cell(m.crash_time), opt_cell(m.busoff_time),
               static_cast<long long>(m.crash_time.has_value()),
               static_cast<long long>(m.busoff_time.has_value()),
               static_cast<long long>(m.max_error_counter)});
    min_gap = std::min(min_gap, m.min_gap);
    finals.push_back(m.final_gap);
    counters.push_back(m.max_error_counter);
    if (m.crash_time) crash_times.push_back(*m.crash_time);
    if (m.busoff_time) busoff_times.push_back(*m.busoff_time);
  }
  const auto n = static_cast<double>(seeds.size());
  auto mean_of = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double crash_freq = static_cast<double>(crash_times.size()) / n;
  const double busoff_freq = static_cast<double>(busoff_times.size()) / n;
  t.add_row({std::string("aggregate"), std::monostate{}, min_gap, median(finals),
             opt_cell(mean_of(crash_times)), opt_cell(mean_of(busoff_times)),
             crash_freq, busoff_freq, median(counters)});
  outputs.table(t, "acc_metrics");
  write_traces(cfg, prep, outputs, "acc_");
  outputs.manifest(seeds);

  const acc::PRange range = acc::recommend_p_range(prep.game.sys, cfg.counter);
  out << fmt::format("acc: p = {}, attacker {}, controller {}, lag {}, {} seeds\n",
                     num(p), cfg.attacker_name, cfg.controller,
                     acc::to_string(cfg.acc.params.lag), seeds.size());
  out << fmt::format("  bus-off frequency {}, crash frequency {}\n", num(busoff_freq),
                     num(crash_freq));
  out << fmt::format("  median final gap {} m, smallest gap {} m, median max counter {}\n",
                     num(median(finals)), num(min_gap), num(median(counters)));
  out << fmt::format("  negative counter drift needs p < {}\n", num(range.upper));
  return kOk;
}

namespace {

/// Flag values that are copied into the config tree after parsing.
class Overrides {
 public:
  template <class T>
  void option(CLI::App* app, const std::string& flag, const std::string& key,
              const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    if constexpr (std::is_same_v<T, std::vector<double>>) opt->delimiter(',');
    apply_[app].push_back([opt, value, key](Json& j) {
      if (opt->count()) set_key(j, key, Json(*value));
    });
  }

  void flag(CLI::App* app, const std::string& flag, const std::string& key,
            Json value, const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, help);
    apply_[app].push_back([opt, key, value](Json& j) {
      if (opt->count()) set_key(j, key, value);
    });
  }

  void apply(CLI::App* app, Json& j) const {
    if (auto it = apply_.find(app); it != apply_.end()) {
      for (const auto& f : it->second) f(j);
    }
  }

 private:
  std::map<CLI::App*, std::vector<std::function<void(Json&)>>> apply_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Bus-off attack game: synthesis, hitting times and Monte Carlo",
               "busoff"};
  app.set_version_flag("--version", BUSOFF_VERSION);
  app.require_subcommand(1);

  Overrides ov;
  std::map<CLI::App*, std::string> config_paths;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_paths[sub], "JSON config file")
        ->check(CLI::ExistingFile);
    ov.option<std::string>(sub, "--out", "output.dir",
                           std::string("output directory (default $") + kOutDirEnv +
                               " or " + kDefaultOutDir + ")");
    ov.option<std::string>(sub, "--format", "output.format", "csv or json");
  };
  auto counter = [&](CLI::App* sub) {
    ov.option<int>(sub, "--e-plus", "counter.e_plus", "counter increment on collision");
    ov.option<int>(sub, "--e-minus", "counter.e_minus", "counter decrement on success");
    ov.option<int>(sub, "--e-bar", "counter.e_bar", "bus-off threshold");
    ov.option<int>(sub, "--s0", "counter.s0", "initial counter value");
  };
  auto game = [&](CLI::App* sub, bool acc, bool single_p) {
    if (single_p) ov.option<double>(sub, "--p", "p", "transmission probability");
    ov.option<std::string>(sub, "--attacker", "attacker.kind",
                           "none, dominant-closed, dominant-open, closed-loop, open-loop");
    ov.option<std::string>(sub, "--controller", "controller",
                           acc ? "stationary or ladder" : "stationary, ladder or zero");
    ov.option<int>(sub, "--seeds", "seeds.count", "number of episodes");
    ov.option<std::uint64_t>(sub, "--base-seed", "seeds.base", "seed of the first episode");
    ov.option<int>(sub, "--threads", "threads", "worker threads (0: all cores)");
    ov.option<std::string>(sub, "--traces", "output.traces", "none, first or all");
    ov.option<std::string>(sub, "--post-busoff", "post_busoff", "continue or stop");
    if (!acc) ov.option<int>(sub, "--horizon", "horizon", "episode length in steps");
    counter(sub);
  };

  CLI::App* synth = app.add_subcommand("synth", "stationary policy and Riccati residuals");
  common(synth);
  ov.option<double>(synth, "--p", "p", "transmission probability");
  ov.option<std::string>(synth, "--attacker", "attacker.kind",
                         "attacker the policy is designed against");
  ov.option<int>(synth, "--ladder-horizon", "cost.horizon",
                 "also write the finite-horizon gain ladder");

  CLI::App* hitting = app.add_subcommand("hitting-time", "expected messages to bus-off");
  common(hitting);
  ov.option<std::vector<double>>(hitting, "--p", "hitting_time.p",
                                 "transmission probabilities (comma separated)");
  ov.option<std::vector<double>>(hitting, "--q", "hitting_time.q",
                                 "collision probabilities (comma separated)");
  ov.option<std::string>(hitting, "--attacker", "attacker.kind",
                         "attacker used to turn p into q");
  ov.flag(hitting, "--paper-closed-form", "hitting_time.paper_closed_form", true,
          "add the 1 + 1/q comparison column");
  counter(hitting);

  CLI::App* rho = app.add_subcommand("rho-min", "critical arrival probability");
  common(rho);
  ov.option<double>(rho, "--tol-rho", "synthesis.tol_rho", "bisection tolerance");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo episodes at one p");
  common(simulate);
  game(simulate, false, true);

  CLI::App* sweep = app.add_subcommand("sweep", "Monte Carlo summary for each p in a list");
  common(sweep);
  game(sweep, false, false);
  ov.option<std::vector<double>>(sweep, "--p-list", "sweep.p",
                                 "transmission probabilities (comma separated)");

  CLI::App* accc = app.add_subcommand("acc", "adaptive cruise control brake scenario");
  common(accc);
  game(accc, true, true);
  ov.option<std::string>(accc, "--lag", "model.lag", "canonical or printed");
  ov.flag(accc, "--canonical-lag", "model.lag", "canonical",
          "actuator input coefficient K_L/T_L (the default)");
  ov.flag(accc, "--printed-lag", "model.lag", "printed", "actuator input coefficient T_L");
  ov.option<double>(accc, "--noise", "model.noise_variance",
                    "process noise variance on relative speed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Json user = Json::object();
    if (const auto& path = config_paths[sub]; !path.empty()) {
      user = load_config_file(path);
      if (!user.is_object()) throw ValidationError(path + ": expected a JSON object");
    }
    ov.apply(sub, user);
    const RunConfig cfg = resolve_config(user, sub->get_name());
    if (sub == synth) return cmd_synth(cfg, out);
    if (sub == hitting) return cmd_hitting_time(cfg, out);
    if (sub == rho) return cmd_rho_min(cfg, out);
    if (sub == simulate) return cmd_simulate(cfg, out);
    if (sub == sweep) return cmd_sweep(cfg, out);
    return cmd_acc(cfg, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
}

}  // namespace busoff::cli
