#include "busoff/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "busoff/errors.hpp"
#include "busoff/linalg.hpp"

namespace busoff {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool bernoulli(std::mt19937_64& rng, double p) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < p;
}

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Per-episode attacker state.
class AttackerState {
 public:
  AttackerState(const AttackerSpec& spec, const TransmissionPolicy& tx) {
    std::visit(
        overloaded{
            [&](const NoAttacker&) {},
            [&](const DominantClosedAttacker&) {
              closed_.emplace(dominant_closed_loop());
            },
            [&](const DominantOpenAttacker&) {
              open_rate_ = dominant_open_loop(tx).p_prime();
            },
            [&](const ClosedLoopAttackPolicy& p) { closed_.emplace(p); },
            [&](const OpenLoopAttackPolicy& p) { open_rate_ = p.p_prime(); },
        },
        spec);
  }

  bool next(int t, bool prev_alpha, std::mt19937_64& rng) {
    if (closed_) return closed_->next(t, prev_alpha, rng);
    if (open_rate_) return bernoulli(rng, *open_rate_);
    return false;
  }

 private:
  std::optional<ClosedLoopAttacker> closed_;
  std::optional<double> open_rate_;
};

Eigen::MatrixXd gain_at(const ControllerSpec& controller, int t,
                        Eigen::Index m, Eigen::Index n) {
  return std::visit(
      overloaded{
          [&](const ZeroController&) -> Eigen::MatrixXd {
            return Eigen::MatrixXd::Zero(m, n);
          },
          [&](const StationaryGain& g) -> Eigen::MatrixXd { return g.K; },
          [&](const TimeVaryingGains& g) -> Eigen::MatrixXd {
            return g.K[static_cast<std::size_t>(t)];
          },
      },
      controller);
}

}  // namespace

AttackerKind attacker_kind(const AttackerSpec& spec) {
  return std::visit(
      overloaded{
          [](const NoAttacker&) { return AttackerKind::None; },
          [](const DominantClosedAttacker&) { return AttackerKind::ClosedLoop; },
          [](const DominantOpenAttacker&) { return AttackerKind::OpenLoop; },
          [](const ClosedLoopAttackPolicy&) { return AttackerKind::ClosedLoop; },
          [](const OpenLoopAttackPolicy&) { return AttackerKind::OpenLoop; },
      },
      spec);
}

void GameConfig::validate() const {
  sys.validate();
  cost.validate(sys.states(), sys.inputs());
  counter.validate();
  if (horizon < 1) throw ValidationError("horizon must be >= 1");
  if (x0.size() != sys.states()) {
    throw ValidationError("x0 has dimension " + std::to_string(x0.size()) +
                          ", system has " + std::to_string(sys.states()) +
                          " states");
  }
  linalg::require_finite(x0, "x0");
  std::visit(overloaded{
                 [](const ZeroController&) {},
                 [&](const StationaryGain& g) {
                   linalg::require_shape(g.K, sys.inputs(), sys.states(),
                                         "controller gain");
                 },
                 [&](const TimeVaryingGains& g) {
                   if (static_cast<int>(g.K.size()) < horizon) {
                     throw ValidationError(
                         "time-varying controller has fewer gains than the "
                         "horizon");
                   }
                   for (const auto& K : g.K) {
                     linalg::require_shape(K, sys.inputs(), sys.states(),
                                           "controller gain");
                   }
                 },
             },
             controller);
  if (const auto* open = std::get_if<OpenLoopAttackPolicy>(&attacker)) {
    if (open->p_prime() > tx.p()) {
      throw ValidationError("open-loop attack rate exceeds p");
    }
  }
}

std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

EpisodeTrace run_episode(const GameConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto& sys = cfg.sys;
  const Eigen::Index n = sys.states();
  const Eigen::Index m = sys.inputs();
  const Eigen::Index d = sys.disturbances();

  auto rng = make_rng(seed);
  AttackerState attacker(cfg.attacker, cfg.tx);
  const NoiseSampler noise(sys.sigma_v);

  EpisodeTrace trace;
  trace.seed = seed;
  trace.steps.reserve(static_cast<std::size_t>(cfg.horizon) + 1);

  CompensatedSum total;
  Eigen::VectorXd x = cfg.x0;
  int S = 0;
  bool prev_alpha = false;  // alpha_{-1}
  bool bused_off = false;
  int t = 0;
  for (; t < cfg.horizon; ++t) {
    const bool alpha_draw = bernoulli(rng, cfg.tx.p());
    const bool alpha = alpha_draw && !bused_off;
    const bool beta = attacker.next(t, prev_alpha, rng);
    const Eigen::VectorXd u = gain_at(cfg.controller, t, m, n) * x;
    const bool applied = alpha && !beta;

    double stage = x.dot(cfg.cost.Q * x);
    if (applied) stage += u.dot(cfg.cost.R * u);

    const Eigen::VectorXd w =
        cfg.disturbance ? cfg.disturbance(t) : Eigen::VectorXd::Zero(d);
    Eigen::VectorXd next = step(sys, x, u, alpha, beta, w);
    if (!noise.is_zero()) next += noise.draw(rng);

    if (alpha) S = update_counter(cfg.counter, S, alpha, beta);
    trace.max_counter = std::max(trace.max_counter, S);
    trace.steps.push_back({t, x, u, alpha, beta, applied, S, stage});
    total.add(stage);

    x = std::move(next);
    prev_alpha = alpha;
    if (!bused_off && S >= cfg.counter.e_bar) {
      bused_off = true;
      trace.xi = t;
      if (!cfg.continue_after_busoff) {
        ++t;
        break;
      }
    }
    if (!x.allFinite()) {
      trace.diverged_at = t + 1;
      trace.total_cost = std::numeric_limits<double>::infinity();
      return trace;
    }
  }

  const double terminal = x.dot(cfg.cost.Q * x);
  trace.steps.push_back(
      {t, x, Eigen::VectorXd::Zero(m), false, false, false, S, terminal});
  total.add(terminal);
  trace.total_cost = total.value();
  if (!std::isfinite(trace.total_cost)) trace.diverged_at = t;
  return trace;
}

void parallel_for(int n, unsigned threads,
                  const std::function<void(int)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(n, 1)));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();  // joins
  if (failure) std::rethrow_exception(failure);
}

MonteCarloSummary monte_carlo(const GameConfig& cfg, int n_episodes,
                              std::uint64_t base_seed,
                              const MonteCarloOptions& opts) {
  if (n_episodes < 1) throw ValidationError("n_episodes must be >= 1");
  cfg.validate();

  std::vector<EpisodeOutcome> outcomes(static_cast<std::size_t>(n_episodes));
  parallel_for(n_episodes, opts.threads, [&](int i) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
    const EpisodeTrace trace = run_episode(cfg, seed);
    auto& out = outcomes[static_cast<std::size_t>(i)];
    out.seed = seed;
    out.total_cost = trace.total_cost;
    out.xi = trace.xi;
    out.diverged_at = trace.diverged_at;
    out.max_counter = trace.max_counter;
    out.crashed = opts.crashed ? opts.crashed(trace) : false;
  });

  MonteCarloSummary summary;
  summary.n_episodes = n_episodes;
  CompensatedSum cost_sum, cost_sq, xi_sum;
  int busoff = 0, crashes = 0, diverged = 0;
  for (const auto& o : outcomes) {
    cost_sum.add(o.total_cost);
    cost_sq.add(o.total_cost * o.total_cost);
    if (o.xi) {
      ++busoff;
      xi_sum.add(*o.xi);
    }
    crashes += o.crashed ? 1 : 0;
    diverged += o.diverged_at ? 1 : 0;
  }
  const double N = n_episodes;
  summary.mean_cost = cost_sum.value() / N;
  if (n_episodes > 1) {
    const double var =
        std::max(0.0, (cost_sq.value() - N * summary.mean_cost *
                                             summary.mean_cost) /
                          (N - 1.0));
    summary.stderr_cost = std::sqrt(var / N);
  }
  summary.busoff_frequency = busoff / N;
  if (busoff > 0) summary.mean_xi = xi_sum.value() / busoff;
  summary.crash_frequency = crashes / N;
  summary.diverged_frequency = diverged / N;
  summary.outcomes = std::move(outcomes);
  return summary;
}

AttackerCostEstimate estimate_attacker_cost(GameConfig cfg, int n_episodes,
                                            std::uint64_t base_seed,
                                            unsigned threads) {
  if (attacker_kind(cfg.attacker) == AttackerKind::None) {
    throw ValidationError("attacker cost needs an attacker");
  }
  cfg.continue_after_busoff = false;
  const MonteCarloSummary mc =
      monte_carlo(cfg, n_episodes, base_seed, {threads, {}});

  AttackerCostEstimate est;
  est.n_episodes = n_episodes;
  CompensatedSum sum, sq;
  for (const auto& o : mc.outcomes) {
    if (!o.xi) continue;
    ++est.n_busoff;
    sum.add(*o.xi);
    sq.add(static_cast<double>(*o.xi) * *o.xi);
  }
  est.censored_fraction = 1.0 - static_cast<double>(est.n_busoff) / n_episodes;
  est.censored = est.censored_fraction > 0.5;
  if (est.n_busoff > 0) {
    const double k = est.n_busoff;
    est.mean_xi = sum.value() / k;
    if (est.n_busoff > 1) {
      const double var =
          std::max(0.0, (sq.value() - k * est.mean_xi * est.mean_xi) / (k - 1));
      est.stderr_xi = std::sqrt(var / k);
    }
  }
  constexpr double kZ99 = 2.5758293035489004;
  est.ci_low = est.mean_xi - kZ99 * est.stderr_xi;
  est.ci_high = est.mean_xi + kZ99 * est.stderr_xi;
  return est;
}

double attacker_collision_probability(const TransmissionPolicy& tx,
                                      const AttackerSpec& attacker) {
  return std::visit(
      overloaded{
          [](const NoAttacker&) { return 0.0; },
          [&](const DominantClosedAttacker&) {
            return collision_probability(tx, dominant_closed_loop());
          },
          // A message collides when the attacker happens to jam that step,
          // so the per-message probability is p' (p p' is per step).
          [&](const DominantOpenAttacker&) { return tx.p(); },
          [&](const ClosedLoopAttackPolicy& p) {
            return collision_probability(tx, p);
          },
          [](const OpenLoopAttackPolicy& p) { return p.p_prime(); },
      },
      attacker);
}

double expected_busoff_step(const TransmissionPolicy& tx,
                            const AttackerSpec& attacker,
                            const ErrorCounterConfig& counter) {
  const double q = attacker_collision_probability(tx, attacker);
  if (!(q > 0.0)) {
    throw InfiniteHittingTimeError("attacker never collides");
  }
  const double v0 = expected_hitting_time(transition_matrix(counter, q), 0);
  const double warmup =
      attacker_kind(attacker) == AttackerKind::ClosedLoop ? 1.0 : 0.0;
  // Message k (1-based) arrives at step index k/p - 1 on average.
  return (warmup + v0) / tx.p() - 1.0;
}

}  // namespace busoff
