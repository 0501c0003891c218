#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

#include "busoff/control_synthesis.hpp"
#include "busoff/error_counter.hpp"
#include "busoff/errors.hpp"
#include "busoff/simulator.hpp"
#include "test_util.hpp"

namespace busoff {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

GameConfig scalar_game(double a, double p, int horizon) {
  GameConfig g;
  g.sys = LinearSystem::make(scalar(a), scalar(1.0));
  g.cost = {scalar(1.0), scalar(1.0), std::nullopt};
  g.tx = TransmissionPolicy(p);
  g.x0 = VectorXd::Constant(1, 1.0);
  g.horizon = horizon;
  return g;
}

GameConfig two_state_game() {
  GameConfig g;
  MatrixXd A(2, 2);
  A << 1.1, 0.3, -0.2, 0.9;
  MatrixXd B(2, 1);
  B << 0.0, 1.0;
  g.sys = LinearSystem::make(A, B, MatrixXd::Identity(2, 2),
                             0.01 * MatrixXd::Identity(2, 2));
  g.cost = {MatrixXd::Identity(2, 2), scalar(0.5), std::nullopt};
  g.tx = TransmissionPolicy(0.5);
  g.attacker = DominantClosedAttacker{};
  g.x0 = VectorXd::Ones(2);
  g.horizon = 60;
  MatrixXd K(1, 2);
  K << -0.4, -0.6;
  g.controller = StationaryGain{K};
  return g;
}

TEST(Simulator, AttackFreePeriodicMatchesLqrRollout) {
  GameConfig g = two_state_game();
  g.sys.sigma_v.setZero();
  g.tx = TransmissionPolicy(1.0);
  g.attacker = NoAttacker{};
  g.horizon = 25;
  const MatrixXd K = std::get<StationaryGain>(g.controller).K;

  const EpisodeTrace tr = run_episode(g, 7);
  ASSERT_EQ(tr.steps.size(), 26u);
  VectorXd x = g.x0;
  double cost = 0.0;
  for (int t = 0; t < 25; ++t) {
    const auto& s = tr.steps[static_cast<std::size_t>(t)];
    EXPECT_LT(testing::max_abs_diff(s.x, x), 1e-12) << t;
    EXPECT_TRUE(s.alpha && s.applied && !s.beta);
    const VectorXd u = K * x;
    cost += x.dot(x) + 0.5 * u.dot(u);
    x = g.sys.A * x + g.sys.B * u;
  }
  EXPECT_LT(testing::max_abs_diff(tr.steps.back().x, x), 1e-12);
  cost += x.dot(x);
  EXPECT_NEAR(tr.total_cost, cost, 1e-12 * cost);
  EXPECT_EQ(tr.max_counter, 0);
  EXPECT_FALSE(tr.xi);
}

TEST(Simulator, DominantClosedLoopJamsTheStepAfterEachTransmission) {
  GameConfig g = two_state_game();
  g.horizon = 2000;
  const EpisodeTrace tr = run_episode(g, 11);
  bool prev = false;
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    EXPECT_EQ(s.beta, prev) << s.t;
    EXPECT_EQ(s.applied, s.alpha && !prev) << s.t;
    prev = s.alpha;
  }
}

TEST(Simulator, ChannelAndStageCostSemantics) {
  GameConfig g = two_state_game();
  g.sys.sigma_v.setZero();
  g.disturbance = [](int t) { return VectorXd::Constant(2, 0.01 * t); };
  const EpisodeTrace tr = run_episode(g, 3);
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    VectorXd expect = g.sys.A * s.x + g.sys.G * VectorXd::Constant(2, 0.01 * s.t);
    if (s.applied) expect += g.sys.B * s.u;
    EXPECT_LT(testing::max_abs_diff(tr.steps[i + 1].x, expect), 1e-12);
    double stage = s.x.dot(s.x);
    if (s.applied) stage += 0.5 * s.u.dot(s.u);
    EXPECT_NEAR(s.stage_cost, stage, 1e-12 * (1.0 + stage));
  }
}

TEST(Simulator, TotalCostIsSumOfStageAndTerminalCosts) {
  const GameConfig g = two_state_game();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const EpisodeTrace tr = run_episode(g, seed);
    ASSERT_EQ(tr.steps.size(), static_cast<std::size_t>(g.horizon) + 1);
    const auto& last = tr.steps.back();
    EXPECT_EQ(last.t, g.horizon);
    EXPECT_NEAR(last.stage_cost, last.x.dot(last.x), 1e-12);
    EXPECT_FALSE(last.alpha);
    double sum = 0.0;
    for (const auto& s : tr.steps) sum += s.stage_cost;
    EXPECT_NEAR(tr.total_cost, sum, 1e-12 * sum);
  }
}

TEST(Simulator, CounterReplaysFromTraceAndFreezesWithoutTraffic) {
  GameConfig g = scalar_game(0.5, 0.5, 3000);
  g.attacker = DominantClosedAttacker{};
  g.counter = {2, -1, 16};
  const EpisodeTrace tr = run_episode(g, 5);
  int S = 0, max_s = 0;
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    const int before = S;
    if (s.alpha) S = update_counter(g.counter, S, s.alpha, s.beta);
    if (!s.alpha) EXPECT_EQ(S, before);
    EXPECT_EQ(s.S, S) << s.t;
    max_s = std::max(max_s, S);
  }
  EXPECT_EQ(tr.max_counter, max_s);
  ASSERT_TRUE(tr.xi);
  EXPECT_GE(tr.steps[static_cast<std::size_t>(*tr.xi)].S, 16);
  if (*tr.xi > 0) EXPECT_LT(tr.steps[static_cast<std::size_t>(*tr.xi - 1)].S, 16);
}

TEST(Simulator, NoTransmissionAfterBusOff) {
  GameConfig g = scalar_game(0.5, 0.5, 3000);
  g.attacker = DominantClosedAttacker{};
  g.counter = {2, -1, 8};
  const EpisodeTrace tr = run_episode(g, 9);
  ASSERT_TRUE(tr.xi);
  for (std::size_t i = static_cast<std::size_t>(*tr.xi) + 1; i < tr.steps.size(); ++i) {
    EXPECT_FALSE(tr.steps[i].alpha);
    EXPECT_FALSE(tr.steps[i].applied);
  }
  EXPECT_EQ(tr.steps.size(), 3001u);

  g.continue_after_busoff = false;
  const EpisodeTrace stop = run_episode(g, 9);
  ASSERT_TRUE(stop.xi);
  EXPECT_EQ(*stop.xi, *tr.xi);
  EXPECT_EQ(stop.steps.size(), static_cast<std::size_t>(*stop.xi) + 2);
  EXPECT_EQ(stop.steps.back().t, *stop.xi + 1);
}

TEST(Simulator, SameSeedSameTrace) {
  const GameConfig g = two_state_game();
  const EpisodeTrace a = run_episode(g, 42);
  const EpisodeTrace b = run_episode(g, 42);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].x, b.steps[i].x);
    EXPECT_EQ(a.steps[i].alpha, b.steps[i].alpha);
    EXPECT_EQ(a.steps[i].beta, b.steps[i].beta);
  }
  EXPECT_EQ(a.total_cost, b.total_cost);
}

TEST(Simulator, SummaryDoesNotDependOnThreadCount) {
  const GameConfig g = two_state_game();
  const auto one = monte_carlo(g, 64, 100, {1, {}});
  const auto four = monte_carlo(g, 64, 100, {4, {}});
  EXPECT_EQ(one.mean_cost, four.mean_cost);
  EXPECT_EQ(one.stderr_cost, four.stderr_cost);
  ASSERT_EQ(one.outcomes.size(), four.outcomes.size());
  for (std::size_t i = 0; i < one.outcomes.size(); ++i) {
    EXPECT_EQ(one.outcomes[i].seed, 100 + i);
    EXPECT_EQ(one.outcomes[i].total_cost, four.outcomes[i].total_cost);
  }
}

TEST(Simulator, ConsecutiveSeedsLookIndependent) {
  const GameConfig g = scalar_game(0.5, 0.5, 20000);
  const EpisodeTrace a = run_episode(g, 1000);
  const EpisodeTrace b = run_episode(g, 1001);
  int agree = 0;
  for (int t = 0; t < g.horizon; ++t) {
    agree += a.steps[static_cast<std::size_t>(t)].alpha ==
             b.steps[static_cast<std::size_t>(t)].alpha;
  }
  const double frac = static_cast<double>(agree) / g.horizon;
  EXPECT_NEAR(frac, 0.5, 3.0 * std::sqrt(0.25 / g.horizon));
}

TEST(Simulator, TransmissionGapsAreGeometric) {
  const double p = 0.2;
  GameConfig g = scalar_game(0.5, p, 200000);
  const EpisodeTrace tr = run_episode(g, 77);
  // Bins 1..15 and >= 16.
  std::array<double, 16> observed{};
  int last = -1, n = 0;
  for (std::size_t i = 0; i + 1 < tr.steps.size(); ++i) {
    if (!tr.steps[i].alpha) continue;
    const int t = tr.steps[i].t;
    if (last >= 0) {
      observed[static_cast<std::size_t>(std::min(t - last, 16) - 1)] += 1;
      ++n;
    }
    last = t;
  }
  ASSERT_GT(n, 30000);
  double chi2 = 0.0, tail = 1.0;
  for (int k = 1; k <= 16; ++k) {
    const double prob = k < 16 ? p * std::pow(1.0 - p, k - 1) : tail;
    tail -= prob;
    const double e = n * prob;
    const double o = observed[static_cast<std::size_t>(k - 1)];
    chi2 += (o - e) * (o - e) / e;
  }
  EXPECT_LT(chi2, 30.578);  // chi^2_15 at 0.99
}

TEST(Simulator, MeanBusOffStepMatchesChain) {
  GameConfig g = scalar_game(0.5, 0.5, 5000);
  g.attacker = DominantClosedAttacker{};
  g.counter = {2, -1, 8};
  const auto est = estimate_attacker_cost(g, 4000, 1);
  ASSERT_EQ(est.n_busoff, 4000);
  const double expect = expected_busoff_step(g.tx, g.attacker, g.counter);
  EXPECT_NEAR(est.mean_xi, expect, 3.0 * est.stderr_xi);
}

TEST(Simulator, MeanBusOffStepMatchesChainForOpenLoopAttack) {
  GameConfig g = scalar_game(0.5, 0.5, 20000);
  g.attacker = OpenLoopAttackPolicy(0.4, g.tx);
  g.counter = {2, -1, 8};
  const auto est = estimate_attacker_cost(g, 3000, 1);
  ASSERT_EQ(est.n_busoff, 3000);
  EXPECT_DOUBLE_EQ(attacker_collision_probability(g.tx, g.attacker), 0.4);
  const double expect = expected_busoff_step(g.tx, g.attacker, g.counter);
  EXPECT_NEAR(est.mean_xi, expect, 3.0 * est.stderr_xi);
}

TEST(Simulator, ImmediateAttackBeatsDelayedAttack) {
  GameConfig g = scalar_game(0.5, 0.5, 50000);
  g.counter = {2, -1, 8};
  g.attacker = ClosedLoopAttackPolicy::deterministic(1);
  const auto d1 = estimate_attacker_cost(g, 2000, 1);
  g.attacker = ClosedLoopAttackPolicy::deterministic(2);
  const auto d2 = estimate_attacker_cost(g, 2000, 1);
  ASSERT_FALSE(d1.censored);
  ASSERT_FALSE(d2.censored);
  EXPECT_LT(d1.ci_high, d2.ci_low);

  g.attacker = ClosedLoopAttackPolicy::deterministic(1);
  const double predicted = expected_busoff_step(g.tx, g.attacker, g.counter);
  EXPECT_LE(d1.ci_low, predicted);
  EXPECT_GE(d1.ci_high, predicted);

  // A mixed policy with collision probability 0.375 < 0.5.
  g.attacker = ClosedLoopAttackPolicy({0.5, 0.5});
  const auto mixed = estimate_attacker_cost(g, 2000, 1);
  EXPECT_LT(d1.ci_high, mixed.ci_low);
}

TEST(Simulator, OpenLoopCostMinimizedAtFullRate) {
  GameConfig g = scalar_game(0.5, 0.5, 50000);
  g.counter = {2, -1, 8};
  double best = std::numeric_limits<double>::infinity();
  double best_pp = 0.0;
  for (double pp : {0.3, 0.4, 0.5}) {
    g.attacker = OpenLoopAttackPolicy(pp, g.tx);
    const auto est = estimate_attacker_cost(g, 1000, 1);
    ASSERT_FALSE(est.censored) << pp;
    if (est.mean_xi < best) {
      best = est.mean_xi;
      best_pp = pp;
    }
  }
  EXPECT_EQ(best_pp, 0.5);
}

TEST(Simulator, ShortHorizonIsFlaggedCensored) {
  GameConfig g = scalar_game(0.5, 0.5, 10);
  g.attacker = ClosedLoopAttackPolicy::deterministic(2);
  const auto est = estimate_attacker_cost(g, 200, 1);
  EXPECT_TRUE(est.censored);
  EXPECT_EQ(est.n_busoff, 0);
  EXPECT_DOUBLE_EQ(est.censored_fraction, 1.0);
}

// Monte Carlo cost against the ladder value, which includes the noise
// constants.
void expect_cost_matches_ladder(const GameConfig& g, double ladder_value,
                                int episodes) {
  const auto mc = monte_carlo(g, episodes, 1);
  EXPECT_NEAR(mc.mean_cost, ladder_value, 3.0 * mc.stderr_cost)
      << "mean " << mc.mean_cost << " stderr " << mc.stderr_cost;
}

TEST(Simulator, OpenLoopCostMatchesLadderShortHorizon) {
  GameConfig g = scalar_game(2.0, 0.5, 5);
  g.sys.sigma_v = scalar(0.01);
  g.cost.horizon = 5;
  g.attacker = DominantOpenAttacker{};
  const OpenLoopLadder lad = backward_open_loop(g.sys, g.cost, 0.5);
  g.controller = TimeVaryingGains{lad.gains};
  expect_cost_matches_ladder(g, lad.value(g.x0), 10000);
}

TEST(Simulator, OpenLoopCostMatchesLadderLongHorizon) {
  GameConfig g = scalar_game(1.05, 0.5, 200);
  g.sys.sigma_v = scalar(0.01);
  g.cost.horizon = 200;
  g.attacker = DominantOpenAttacker{};
  const OpenLoopLadder lad = backward_open_loop(g.sys, g.cost, 0.5);
  g.controller = TimeVaryingGains{lad.gains};
  expect_cost_matches_ladder(g, lad.value(g.x0), 10000);
}

TEST(Simulator, ClosedLoopCostMatchesLadder) {
  GameConfig g = scalar_game(2.0, 0.5, 5);
  g.sys.sigma_v = scalar(0.01);
  g.cost.horizon = 5;
  g.attacker = DominantClosedAttacker{};
  const RiccatiLadder lad = backward_closed_loop(g.sys, g.cost, 0.5);
  g.controller = TimeVaryingGains{lad.gains};
  expect_cost_matches_ladder(g, lad.value(g.x0, false), 10000);
}

TEST(Simulator, AttackFreeCostMatchesBernoulliLadder) {
  GameConfig g = two_state_game();
  g.attacker = NoAttacker{};
  g.horizon = 30;
  g.cost.horizon = 30;
  const OpenLoopLadder lad = backward_bernoulli(g.sys, g.cost, 0.5);
  g.controller = TimeVaryingGains{lad.gains};
  expect_cost_matches_ladder(g, lad.value(g.x0), 10000);
}

TEST(Simulator, OverflowIsMarkedDiverged) {
  GameConfig g = scalar_game(1e100, 0.5, 20);
  const EpisodeTrace tr = run_episode(g, 1);
  ASSERT_TRUE(tr.diverged_at);
  EXPECT_TRUE(std::isinf(tr.total_cost));
  EXPECT_LE(*tr.diverged_at, 5);
  const auto mc = monte_carlo(g, 8, 1);
  EXPECT_DOUBLE_EQ(mc.diverged_frequency, 1.0);
}

TEST(Simulator, CrashPredicateIsCounted) {
  const GameConfig g = two_state_game();
  MonteCarloOptions opts;
  opts.crashed = [](const EpisodeTrace& tr) { return tr.seed % 2 == 0; };
  const auto mc = monte_carlo(g, 10, 1, opts);
  EXPECT_DOUBLE_EQ(mc.crash_frequency, 0.5);
}

TEST(Simulator, RejectsInvalidConfigs) {
  GameConfig g = scalar_game(0.5, 0.5, 10);
  g.x0 = VectorXd::Zero(2);
  EXPECT_THROW(run_episode(g, 1), ValidationError);

  g = scalar_game(0.5, 0.5, 10);
  g.controller = TimeVaryingGains{{scalar(0.0), scalar(0.0)}};
  EXPECT_THROW(run_episode(g, 1), ValidationError);

  g = scalar_game(0.5, 0.5, 10);
  g.controller = StationaryGain{MatrixXd::Zero(2, 1)};
  EXPECT_THROW(run_episode(g, 1), ValidationError);

  g = scalar_game(0.5, 0.5, 0);
  EXPECT_THROW(run_episode(g, 1), ValidationError);

  g = scalar_game(0.5, 0.5, 10);
  g.attacker = OpenLoopAttackPolicy(0.4, TransmissionPolicy(0.5));
  g.tx = TransmissionPolicy(0.3);
  EXPECT_THROW(run_episode(g, 1), ValidationError);

  g = scalar_game(0.5, 0.5, 10);
  EXPECT_THROW(monte_carlo(g, 0, 1), ValidationError);
  EXPECT_THROW(estimate_attacker_cost(g, 10, 1), ValidationError);
  EXPECT_THROW(expected_busoff_step(g.tx, NoAttacker{}, g.counter),
               InfiniteHittingTimeError);
}

}  // namespace
}  // namespace busoff
