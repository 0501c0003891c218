#include "busoff/acc_scenario.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "busoff/errors.hpp"

namespace busoff::acc {
namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<long>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(values.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

std::string_view to_string(LagInput lag) {
  return lag == LagInput::Canonical ? "canonical" : "printed";
}

LagInput parse_lag_input(std::string_view text) {
  if (text == "canonical") return LagInput::Canonical;
  if (text == "printed") return LagInput::AsPrinted;
  throw ValidationError("lag must be 'canonical' or 'printed', got '" +
                        std::string(text) + "'");
}

void AccParams::validate() const {
  for (double v : {K_L, T_L, tau_h, d_0, dt, R}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("ACC parameters must be positive and finite");
    }
  }
  if (!((Q_diag.array() >= 0.0).all())) {
    throw ValidationError("ACC state weights must be nonnegative");
  }
  if (!(noise_variance >= 0.0)) {
    throw ValidationError("ACC noise variance must be nonnegative");
  }
}

CostSpec AccParams::cost(std::optional<int> horizon) const {
  return {Q_diag.asDiagonal().toDenseMatrix(),
          Eigen::MatrixXd::Constant(1, 1, R), horizon};
}

void BrakeScenario::validate() const {
  if (!(duration > brake_start && brake_start > 0.0)) {
    throw ValidationError("scenario needs duration > brake_start > 0");
  }
  if (!(brake_decel < 0.0)) {
    throw ValidationError("brake deceleration must be negative");
  }
  if (!(lead_v0 >= 0.0 && ego_v0 >= 0.0)) {
    throw ValidationError("initial speeds must be nonnegative");
  }
}

int BrakeScenario::steps(double dt) const {
  return static_cast<int>(std::lround(duration / dt));
}

ContinuousSystem build_acc_system(const AccParams& params) {
  params.validate();
  ContinuousSystem cs;
  cs.A.resize(3, 3);
  cs.A << 0.0, 1.0, -params.tau_h,  //
      0.0, 0.0, -1.0,               //
      0.0, 0.0, -1.0 / params.T_L;
  cs.B = Eigen::MatrixXd::Zero(3, 1);
  cs.B(2, 0) = params.lag == LagInput::Canonical ? params.K_L / params.T_L
                                                 : params.T_L;
  cs.G = Eigen::MatrixXd::Zero(3, 1);
  cs.G(1, 0) = 1.0;
  cs.sigma_v = Eigen::MatrixXd::Zero(3, 3);
  cs.sigma_v(1, 1) = params.noise_variance;
  cs.dt = params.dt;
  return cs;
}

LinearSystem build_acc_discrete(const AccParams& params) {
  return discretize_zoh(build_acc_system(params));
}

LeadState brake_profile(const BrakeScenario& scn, double t) {
  if (!(t >= 0.0 && t <= scn.duration)) {
    throw ValidationError("time outside the scenario");
  }
  const double stop_time = scn.brake_start + scn.lead_v0 / -scn.brake_decel;
  if (t < scn.brake_start) return {0.0, scn.lead_v0};
  if (t < stop_time) {
    return {scn.brake_decel,
            std::max(0.0, scn.lead_v0 + scn.brake_decel * (t - scn.brake_start))};
  }
  return {0.0, 0.0};
}

Eigen::Vector3d initial_state(const AccParams& params,
                              const BrakeScenario& scn) {
  const double gap = scn.lead_x0 - scn.ego_x0;
  const double d_des = params.tau_h * scn.ego_v0 + params.d_0;
  return {gap - d_des, scn.lead_v0 - scn.ego_v0, 0.0};
}

AccSetup make_acc_setup(double p, const AccRunOptions& options) {
  options.params.validate();
  options.scenario.validate();
  if (p >= 1.0 && options.attacker != AttackerKind::None) {
    throw ValidationError("p = 1 is only meaningful without an attacker");
  }
  const AccParams& params = options.params;
  const BrakeScenario& scn = options.scenario;
  const int steps = scn.steps(params.dt);

  AccSetup setup{GameConfig{}, options};
  GameConfig& g = setup.game;
  g.sys = build_acc_discrete(params);
  g.cost = params.cost(steps);
  g.tx = TransmissionPolicy(p);
  g.counter = options.counter;
  g.x0 = initial_state(params, scn);
  g.horizon = steps;
  g.continue_after_busoff = true;

  switch (options.attacker) {
    case AttackerKind::None: g.attacker = NoAttacker{}; break;
    case AttackerKind::ClosedLoop: g.attacker = DominantClosedAttacker{}; break;
    case AttackerKind::OpenLoop: g.attacker = DominantOpenAttacker{}; break;
  }

  if (options.mode == ControllerMode::Stationary) {
    g.controller = StationaryGain{
        stationary_policy(g.sys, params.cost(), p, options.attacker,
                          options.synthesis)
            .K};
  } else if (options.attacker == AttackerKind::ClosedLoop) {
    g.controller = TimeVaryingGains{backward_closed_loop(g.sys, g.cost, p).gains};
  } else {
    g.controller = TimeVaryingGains{
        backward_bernoulli(g.sys, g.cost,
                           effective_arrival(options.attacker, p))
            .gains};
  }

  // The lead's acceleration is piecewise constant per step; sample it at the
  // middle of the step to stay clear of the phase boundaries.
  const double dt = params.dt;
  g.disturbance = [scn, dt](int k) {
    const double t = std::min((k + 0.5) * dt, scn.duration);
    return Eigen::VectorXd::Constant(1, brake_profile(scn, t).accel);
  };
  return setup;
}

AccKinematics reconstruct(const EpisodeTrace& trace, const AccParams& params,
                          const BrakeScenario& scn) {
  AccKinematics kin;
  kin.gap.reserve(trace.steps.size());
  kin.v_ego.reserve(trace.steps.size());
  kin.v_lead.reserve(trace.steps.size());
  for (const auto& row : trace.steps) {
    const double t = std::min(row.t * params.dt, scn.duration);
    const double v_lead = brake_profile(scn, t).velocity;
    const double v_ego = v_lead - row.x(1);
    kin.v_lead.push_back(v_lead);
    kin.v_ego.push_back(v_ego);
    kin.gap.push_back(row.x(0) + params.tau_h * v_ego + params.d_0);
  }
  return kin;
}

SafetyMetrics safety_metrics(const EpisodeTrace& trace,
                             const AccKinematics& kin,
                             const AccParams& params) {
  SafetyMetrics m;
  if (kin.gap.empty()) return m;
  m.min_gap = *std::min_element(kin.gap.begin(), kin.gap.end());
  m.final_gap = kin.gap.back();
  for (std::size_t i = 0; i < kin.gap.size(); ++i) {
    if (kin.gap[i] < 0.0) {
      m.crash_time = trace.steps[i].t * params.dt;
      break;
    }
  }
  if (trace.xi) m.busoff_time = *trace.xi * params.dt;
  m.max_error_counter = trace.max_counter;
  return m;
}

AccRun run_acc(const AccSetup& setup, std::uint64_t seed) {
  AccRun run;
  run.trace = run_episode(setup.game, seed);
  run.kinematics =
      reconstruct(run.trace, setup.options.params, setup.options.scenario);
  run.metrics =
      safety_metrics(run.trace, run.kinematics, setup.options.params);
  return run;
}

AccRun run_acc(double p, const AccRunOptions& options, std::uint64_t seed) {
  return run_acc(make_acc_setup(p, options), seed);
}

double AccBatch::busoff_frequency() const {
  if (metrics.empty()) return 0.0;
  const auto n = std::count_if(metrics.begin(), metrics.end(),
                               [](const auto& m) { return m.busoff_time.has_value(); });
  return static_cast<double>(n) / static_cast<double>(metrics.size());
}

double AccBatch::crash_frequency() const {
  if (metrics.empty()) return 0.0;
  const auto n = std::count_if(metrics.begin(), metrics.end(),
                               [](const auto& m) { return m.crash_time.has_value(); });
  return static_cast<double>(n) / static_cast<double>(metrics.size());
}

double AccBatch::median_final_gap() const {
  std::vector<double> v;
  for (const auto& m : metrics) v.push_back(m.final_gap);
  return median(std::move(v));
}

double AccBatch::median_max_counter() const {
  std::vector<double> v;
  for (const auto& m : metrics) v.push_back(m.max_error_counter);
  return median(std::move(v));
}

AccBatch run_acc_batch(double p, const AccRunOptions& options, int n_seeds,
                       std::uint64_t base_seed, unsigned threads) {
  if (n_seeds < 1) throw ValidationError("need at least one seed");
  const AccSetup setup = make_acc_setup(p, options);
  AccBatch batch;
  batch.p = p;
  batch.seeds.resize(static_cast<std::size_t>(n_seeds));
  batch.metrics.resize(static_cast<std::size_t>(n_seeds));
  parallel_for(n_seeds, threads, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    batch.seeds[idx] = base_seed + static_cast<std::uint64_t>(i);
    batch.metrics[idx] = run_acc(setup, batch.seeds[idx]).metrics;
  });
  return batch;
}

PRange recommend_p_range(const LinearSystem& sys,
                         const ErrorCounterConfig& counter) {
  counter.validate();
  PRange range;
  range.rho_min_lower = rho_min_bounds(sys.A).lower;
  const double r = range.rho_min_lower;
  if (r <= 0.0) {
    range.lower_kind = PRange::Lower::Vacuous;
    range.lower_lo = 0.0;
    range.lower_hi = 1.0;
    range.note = "no unstable eigenvalues: p(1-p) > 0 holds for every p";
  } else if (r >= 0.25) {
    range.lower_kind = PRange::Lower::Empty;
    range.note =
        "p(1-p) <= 1/4 < rho_min lower bound: no p in (0,1) can give bounded "
        "cost; decrease the sampling time to bring A closer to identity";
  } else {
    const double s = std::sqrt(1.0 - 4.0 * r);
    range.lower_kind = PRange::Lower::Interval;
    range.lower_lo = 0.5 * (1.0 - s);
    range.lower_hi = 0.5 * (1.0 + s);
  }
  range.upper = zero_drift_probability(counter);
  return range;
}

}  // namespace busoff::acc
