#pragma once

#include <Eigen/Core>

namespace busoff {

/// CAN-style transmit error counter: +e_plus on a collision, +e_minus
/// (negative) on a successful transmission, floored at 0 and absorbing at
/// e_bar (bus-off).
struct ErrorCounterConfig {
  int e_plus = 2;
  int e_minus = -1;
  int e_bar = 128;

  void validate() const;
};

/// Three-case counter update for one step.
int update_counter(const ErrorCounterConfig& cfg, int S, bool alpha,
                   bool beta);

/// Message-space Markov chain of the counter for a fixed collision
/// probability q. States are 0..e_bar; e_bar is absorbing.
struct CounterChain {
  ErrorCounterConfig config;
  double q = 0.0;
  Eigen::MatrixXd theta;

  int states() const { return config.e_bar + 1; }
};

CounterChain transition_matrix(const ErrorCounterConfig& cfg, double q);

/// Expected number of messages to reach e_bar from every transient state:
/// v = (I - Theta_bar)^{-1} 1 on the transient block.
Eigen::VectorXd expected_hitting_times(const CounterChain& chain);

double expected_hitting_time(const CounterChain& chain, int s0);

/// Converts an expected message count into steps for the memoryless
/// transmitter: messages / p.
double expected_steps(double expected_messages, double p);

/// The attacker-side closed form 1 + 1/q. Exposed only for comparison with
/// the exact solve; it does not agree with it in general.
double closed_form_hitting_time(double q);

/// Mean counter increment per message, q e_plus + (1 - q) e_minus.
double drift(const ErrorCounterConfig& cfg, double q);

/// Largest q with nonpositive drift: -e_minus / (e_plus - e_minus).
double zero_drift_probability(const ErrorCounterConfig& cfg);

/// (Theta^n)_{s0, e_bar}: probability of bus-off within n messages.
double bus_off_probability_within(const CounterChain& chain, int s0,
                                  long long n_messages);

}  // namespace busoff
