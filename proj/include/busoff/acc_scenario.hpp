#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "busoff/control_synthesis.hpp"
#include "busoff/error_counter.hpp"
#include "busoff/simulator.hpp"
#include "busoff/system_model.hpp"

namespace busoff::acc {

/// How the first-order actuator lag a_f = K_L / (T_L s + 1) a_des enters the
/// state equation. `Canonical` uses input coefficient K_L / T_L; `AsPrinted`
/// uses T_L.
enum class LagInput { Canonical, AsPrinted };

std::string_view to_string(LagInput lag);
LagInput parse_lag_input(std::string_view text);

/// Car-following model with state x = [spacing error, relative speed, a_f],
/// spacing error = gap - (tau_h v_ego + d_0).
struct AccParams {
  double K_L = 1.0;
  double T_L = 0.45;    // s
  double tau_h = 2.5;   // s
  double d_0 = 5.0;     // m
  double dt = 0.1;      // s
  Eigen::Vector3d Q_diag{0.06, 0.1, 0.5};
  double R = 1.0;
  LagInput lag = LagInput::Canonical;
  double noise_variance = 0.0;  // on relative speed; 0 means no noise

  void validate() const;
  CostSpec cost(std::optional<int> horizon = std::nullopt) const;
};

/// Lead car cruises, then brakes at constant deceleration to a stop.
struct BrakeScenario {
  double lead_x0 = 100.0;     // m
  double lead_v0 = 25.0;      // m/s
  double ego_x0 = 0.0;        // m
  double ego_v0 = 20.0;       // m/s
  double brake_start = 20.0;  // s
  double brake_decel = -2.5;  // m/s^2
  double duration = 100.0;    // s

  void validate() const;
  int steps(double dt) const;
};

struct SafetyMetrics {
  double min_gap = 0.0;    // m
  double final_gap = 0.0;  // m
  std::optional<double> crash_time;   // s, first time the gap is negative
  std::optional<double> busoff_time;  // s
  int max_error_counter = 0;
};

ContinuousSystem build_acc_system(const AccParams& params);

/// Discretized plant including the noise covariance from the params.
LinearSystem build_acc_discrete(const AccParams& params);

struct LeadState {
  double accel = 0.0;     // m/s^2
  double velocity = 0.0;  // m/s
};

LeadState brake_profile(const BrakeScenario& scn, double t);

/// Initial state [gap - d_des, v_lead - v_ego, 0].
Eigen::Vector3d initial_state(const AccParams& params,
                              const BrakeScenario& scn);

enum class ControllerMode { Stationary, Ladder };

struct AccRunOptions {
  AccParams params;
  BrakeScenario scenario;
  ErrorCounterConfig counter;  // defaults: e+ = 2, e- = -1, e_bar = 128
  ControllerMode mode = ControllerMode::Stationary;
  AttackerKind attacker = AttackerKind::ClosedLoop;  // dominant attacker
  FixedPointOptions synthesis;
};

/// Everything needed to replay one ACC configuration.
struct AccSetup {
  GameConfig game;
  AccRunOptions options;
};

/// Builds the game for transmission probability p. p = 1 is allowed only
/// without an attacker.
AccSetup make_acc_setup(double p, const AccRunOptions& options);

/// Gap, ego speed and lead speed at each trace row.
struct AccKinematics {
  std::vector<double> gap;
  std::vector<double> v_ego;
  std::vector<double> v_lead;
};

/// v_lead follows the brake profile; v_ego = v_lead - relative speed;
/// gap = spacing error + tau_h v_ego + d_0.
AccKinematics reconstruct(const EpisodeTrace& trace, const AccParams& params,
                          const BrakeScenario& scn);

SafetyMetrics safety_metrics(const EpisodeTrace& trace,
                             const AccKinematics& kin, const AccParams& params);

struct AccRun {
  EpisodeTrace trace;
  AccKinematics kinematics;
  SafetyMetrics metrics;
};

AccRun run_acc(const AccSetup& setup, std::uint64_t seed);

AccRun run_acc(double p, const AccRunOptions& options, std::uint64_t seed);

struct AccBatch {
  double p = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<SafetyMetrics> metrics;

  double busoff_frequency() const;
  double crash_frequency() const;
  double median_final_gap() const;
  double median_max_counter() const;
};

AccBatch run_acc_batch(double p, const AccRunOptions& options, int n_seeds,
                       std::uint64_t base_seed, unsigned threads = 0);

struct PRange {
  double rho_min_lower = 0.0;
  enum class Lower { Vacuous, Interval, Empty } lower_kind = Lower::Vacuous;
  double lower_lo = 0.0;  // p(1-p) > rho_min_lower on (lower_lo, lower_hi)
  double lower_hi = 1.0;
  double upper = 1.0;  // negative counter drift needs p < upper
  std::string note;
};

/// Transmission-probability range from the spectral bound on rho_min and the
/// negative-drift condition on the counter, for the dominant closed-loop
/// attacker (collision probability q = p).
PRange recommend_p_range(const LinearSystem& sys,
                         const ErrorCounterConfig& counter);

}  // namespace busoff::acc
