#include "busoff/error_counter.hpp"

#include <algorithm>
#include <cmath>
#include <string>


#include "busoff/errors.hpp"

namespace busoff {

void ErrorCounterConfig::validate() const {
  if (!(e_plus > 0 && e_minus < 0)) {
    throw ValidationError("counter increments need e_plus > 0 > e_minus");
  }
  if (e_plus <= -e_minus) {
    throw ValidationError("counter increments need |e_plus| > |e_minus|");
  }
  if (e_bar < e_plus) {
    throw ValidationError("counter threshold e_bar must be >= e_plus");
  }
}

int update_counter(const ErrorCounterConfig& cfg, int S, bool alpha,
                   bool beta) {
  if (S < 0 || S > cfg.e_bar) {
    throw ValidationError("counter value " + std::to_string(S) +
                          " outside [0, " + std::to_string(cfg.e_bar) + "]");
  }
  if (alpha && beta) return std::min(cfg.e_bar, S + cfg.e_plus);
  if (alpha) return std::max(0, S + cfg.e_minus);
  return S;
}

CounterChain transition_matrix(const ErrorCounterConfig& cfg, double q) {
  cfg.validate();
  if (!(q > 0.0 && q <= 1.0)) {
    throw ValidationError("collision probability must lie in (0, 1], got " +
                          std::to_string(q));
  }
  const int n = cfg.e_bar + 1;
  CounterChain chain{cfg, q, Eigen::MatrixXd::Zero(n, n)};
  for (int s = 0; s < cfg.e_bar; ++s) {
    chain.theta(s, std::min(cfg.e_bar, s + cfg.e_plus)) += q;
    chain.theta(s, std::max(0, s + cfg.e_minus)) += 1.0 - q;
  }
  chain.theta(cfg.e_bar, cfg.e_bar) = 1.0;
  return chain;
}

Eigen::VectorXd expected_hitting_times(const CounterChain& chain) {
  if (!(chain.q > 0.0)) {
    throw InfiniteHittingTimeError(
        "collision probability is zero; bus-off is never reached");
  }
  // Eliminate transient states one at a time, folding each into the chain
  // censored on the remaining ones (Grassmann-Taksar-Heyman style). Pivots
  // are sums of outgoing probabilities rather than 1 - theta_kk, so every
  // update adds nonnegative terms and v keeps full relative accuracy even
  // when it is astronomically large under negative drift.
  const int n = chain.config.e_bar;  // transient states 0..e_bar-1
  Eigen::MatrixXd P = chain.theta.topLeftCorner(n, n);
  Eigen::VectorXd exit = chain.theta.col(n).head(n);
  Eigen::VectorXd r = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd pivot(n);
  for (int k = 0; k < n; ++k) {
    double d = exit(k);
    for (int j = k + 1; j < n; ++j) d += P(k, j);
    if (!(d > 0.0)) {
      throw InfiniteHittingTimeError("hitting-time system is singular");
    }
    pivot(k) = d;
    for (int i = k + 1; i < n; ++i) {
      const double f = P(i, k) / d;
      if (f == 0.0) continue;
      for (int j = k + 1; j < n; ++j) P(i, j) += f * P(k, j);
      exit(i) += f * exit(k);
      r(i) += f * r(k);
    }
  }
  Eigen::VectorXd v(n);
  for (int k = n - 1; k >= 0; --k) {
    double acc = r(k);
    for (int j = k + 1; j < n; ++j) acc += P(k, j) * v(j);
    v(k) = acc / pivot(k);
  }
  if (!v.allFinite()) {
    throw InfiniteHittingTimeError("expected hitting time overflows");
  }
  return v;
}

double expected_hitting_time(const CounterChain& chain, int s0) {
  if (s0 < 0 || s0 >= chain.config.e_bar) {
    throw ValidationError("initial counter must lie in [0, e_bar)");
  }
  return expected_hitting_times(chain)(s0);
}

double expected_steps(double expected_messages, double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("transmission probability must lie in (0, 1]");
  }
  return expected_messages / p;
}

double closed_form_hitting_time(double q) { return 1.0 + 1.0 / q; }

double drift(const ErrorCounterConfig& cfg, double q) {
  return q * cfg.e_plus + (1.0 - q) * cfg.e_minus;
}

double zero_drift_probability(const ErrorCounterConfig& cfg) {
  return static_cast<double>(-cfg.e_minus) /
         static_cast<double>(cfg.e_plus - cfg.e_minus);
}

double bus_off_probability_within(const CounterChain& chain, int s0,
                                  long long n_messages) {
  if (n_messages < 0) throw ValidationError("message count must be >= 0");
  if (s0 < 0 || s0 > chain.config.e_bar) {
    throw ValidationError("initial counter must lie in [0, e_bar]");
  }
  const int n = chain.states();
  Eigen::RowVectorXd dist = Eigen::RowVectorXd::Zero(n);
  dist(s0) = 1.0;
  // Row-vector times repeated squares of Theta.
  Eigen::MatrixXd power = chain.theta;
  long long k = n_messages;
  while (k > 0) {
    if (k & 1) dist = dist * power;
    k >>= 1;
    if (k > 0) power = power * power;
  }
  return std::clamp(dist(chain.config.e_bar), 0.0, 1.0);
}

}  // namespace busoff
