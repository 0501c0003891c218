#pragma once

// Brute-force reference computations shared by unit and acceptance tests.
// They enumerate or simulate directly and never call the recursions they
// check.

#include <cmath>
#include <vector>

namespace busoff::oracle {

struct Scalar {
  double a, b, q, r;
};

/// Exact expected cost of a scalar plant over all 2^N transmission
/// sequences under the dominant closed-loop attack (beta_t = alpha_{t-1}),
/// using the given gains. Control lands iff alpha_t = 1 and alpha_{t-1} = 0.
inline double exhaustive_closed_loop_cost(const Scalar& s, double p,
                                          const std::vector<double>& gains,
                                          double x0, bool prev_alpha) {
  const int N = static_cast<int>(gains.size());
  double expected = 0.0;
  for (unsigned mask = 0; mask < (1u << N); ++mask) {
    double prob = 1.0;
    double x = x0;
    double cost = 0.0;
    bool prev = prev_alpha;
    for (int t = 0; t < N; ++t) {
      const bool alpha = (mask >> t) & 1u;
      prob *= alpha ? p : 1.0 - p;
      const bool applied = alpha && !prev;
      const double u = gains[static_cast<std::size_t>(t)] * x;
      cost += s.q * x * x + (applied ? s.r * u * u : 0.0);
      x = s.a * x + (applied ? s.b * u : 0.0);
      prev = alpha;
    }
    cost += s.q * x * x;
    expected += prob * cost;
  }
  return expected;
}

/// Positive fixed point of the scalar modified Riccati map with
/// b = q = r = 1, P = a^2 P + 1 - rho a^2 P^2 / (P + 1). Clearing the
/// denominator gives (a^2 - rho a^2 - 1) P^2 + a^2 P + 1 = 0.
inline double scalar_fixed_point(double a, double rho) {
  const double c2 = a * a - rho * a * a - 1.0;
  const double c1 = a * a;
  const double c0 = 1.0;
  if (std::abs(c2) < 1e-15) return -c0 / c1;
  const double disc = c1 * c1 - 4.0 * c2 * c0;
  const double r1 = (-c1 + std::sqrt(disc)) / (2.0 * c2);
  const double r2 = (-c1 - std::sqrt(disc)) / (2.0 * c2);
  return r1 > 0.0 ? r1 : r2;
}

}  // namespace busoff::oracle
