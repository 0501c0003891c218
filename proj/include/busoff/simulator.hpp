#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "busoff/control_synthesis.hpp"
#include "busoff/error_counter.hpp"
#include "busoff/policies.hpp"
#include "busoff/system_model.hpp"

namespace busoff {

struct NoAttacker {};
struct DominantClosedAttacker {};
struct DominantOpenAttacker {};

using AttackerSpec =
    std::variant<NoAttacker, DominantClosedAttacker, DominantOpenAttacker,
                 ClosedLoopAttackPolicy, OpenLoopAttackPolicy>;

AttackerKind attacker_kind(const AttackerSpec& spec);

struct ZeroController {};
struct StationaryGain {
  Eigen::MatrixXd K;
};
/// K_t for t = 0..N-1; the horizon may not exceed the number of gains.
struct TimeVaryingGains {
  std::vector<Eigen::MatrixXd> K;
};

using ControllerSpec =
    std::variant<ZeroController, StationaryGain, TimeVaryingGains>;

/// Known disturbance w_t entering through G, indexed by step.
using DisturbanceProfile = std::function<Eigen::VectorXd(int step)>;

struct GameConfig {
  LinearSystem sys;
  CostSpec cost;
  TransmissionPolicy tx{1.0};
  AttackerSpec attacker = NoAttacker{};
  ErrorCounterConfig counter;
  ControllerSpec controller = ZeroController{};
  Eigen::VectorXd x0;
  int horizon = 1;
  DisturbanceProfile disturbance;  // empty means w = 0
  bool continue_after_busoff = true;

  void validate() const;
};

struct StepRecord {
  int t = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;  // commanded, recorded even when not applied
  bool alpha = false;
  bool beta = false;
  bool applied = false;
  int S = 0;  // counter after this step's transmission event
  double stage_cost = 0.0;
};

/// One played episode. `steps` holds rows t = 0..T-1 plus a terminal row
/// t = T carrying x_T and the terminal cost x_T' Q x_T (u = 0, no traffic).
struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::optional<int> xi;           // first step with S >= e_bar
  std::optional<int> diverged_at;  // first step with a non-finite state
  double total_cost = 0.0;
  int max_counter = 0;
};

/// Seeds the per-episode generator.
std::mt19937_64 make_rng(std::uint64_t seed);

/// Plays one episode; a deterministic function of (cfg, seed).
EpisodeTrace run_episode(const GameConfig& cfg, std::uint64_t seed);

struct EpisodeOutcome {
  std::uint64_t seed = 0;
  double total_cost = 0.0;
  std::optional<int> xi;
  std::optional<int> diverged_at;
  bool crashed = false;
  int max_counter = 0;
};

struct MonteCarloSummary {
  int n_episodes = 0;
  double mean_cost = 0.0;
  double stderr_cost = 0.0;
  double busoff_frequency = 0.0;
  std::optional<double> mean_xi;  // over episodes that reached bus-off
  double crash_frequency = 0.0;
  double diverged_frequency = 0.0;
  std::vector<EpisodeOutcome> outcomes;
};

struct MonteCarloOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::function<bool(const EpisodeTrace&)> crashed;
};

/// Episodes use seeds base_seed + i. The reduction runs in episode order, so
/// the summary does not depend on the thread count.
MonteCarloSummary monte_carlo(const GameConfig& cfg, int n_episodes,
                              std::uint64_t base_seed,
                              const MonteCarloOptions& opts = {});

/// Runs `fn(i)` for i in [0, n) on a small worker pool.
void parallel_for(int n, unsigned threads, const std::function<void(int)>& fn);

struct AttackerCostEstimate {
  int n_episodes = 0;
  int n_busoff = 0;
  double mean_xi = 0.0;  // over episodes that reached bus-off
  double stderr_xi = 0.0;
  double ci_low = 0.0;  // 99% normal-approximation interval
  double ci_high = 0.0;
  double censored_fraction = 0.0;
  bool censored = false;  // more than half of the episodes never bused off
};

/// Monte Carlo estimate of E[xi] for an explicit attacker. Episodes stop at
/// bus-off.
AttackerCostEstimate estimate_attacker_cost(GameConfig cfg, int n_episodes,
                                            std::uint64_t base_seed,
                                            unsigned threads = 0);

/// Exact E[xi] (0-based bus-off step) from the message-space chain, for the
/// memoryless transmitter. A closed-loop attacker is idle until it has seen
/// one transmission, so the first message never collides; the open-loop
/// attacker has no such warm-up.
double expected_busoff_step(const TransmissionPolicy& tx,
                            const AttackerSpec& attacker,
                            const ErrorCounterConfig& counter);

/// Collision probability per message for the given attacker.
double attacker_collision_probability(const TransmissionPolicy& tx,
                                      const AttackerSpec& attacker);

}  // namespace busoff
