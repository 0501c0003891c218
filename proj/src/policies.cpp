#include "busoff/policies.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "busoff/errors.hpp"

namespace busoff {

TransmissionPolicy::TransmissionPolicy(double p) : p_(p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ValidationError("transmission probability must lie in (0, 1], got " +
                          std::to_string(p));
  }
}

ClosedLoopAttackPolicy::ClosedLoopAttackPolicy(std::vector<double> head,
                                               double tail_mass,
                                               double tail_ratio)
    : head_(std::move(head)), tail_mass_(tail_mass), tail_ratio_(tail_ratio) {
  for (double w : head_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("iota weights must be finite and nonnegative");
    }
  }
  if (!(tail_mass_ >= 0.0) || !std::isfinite(tail_mass_)) {
    throw ValidationError("iota tail mass must be finite and nonnegative");
  }
  if (!(tail_ratio_ >= 0.0 && tail_ratio_ < 1.0)) {
    throw ValidationError("iota tail ratio must lie in [0, 1)");
  }
  const double total =
      std::accumulate(head_.begin(), head_.end(), 0.0) + tail_mass_;
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError("iota must sum to 1 (got " + std::to_string(total) +
                          ")");
  }
}

ClosedLoopAttackPolicy ClosedLoopAttackPolicy::deterministic(int k) {
  if (k < 1) throw ValidationError("waiting time must be >= 1");
  std::vector<double> head(static_cast<std::size_t>(k), 0.0);
  head.back() = 1.0;
  return ClosedLoopAttackPolicy(std::move(head));
}

double ClosedLoopAttackPolicy::weight(int k) const {
  if (k < 1) return 0.0;
  const int K = static_cast<int>(head_.size());
  if (k <= K) return head_[static_cast<std::size_t>(k - 1)];
  return tail_mass_ * (1.0 - tail_ratio_) *
         std::pow(tail_ratio_, static_cast<double>(k - K - 1));
}

bool ClosedLoopAttackPolicy::is_immediate() const { return weight(1) == 1.0; }

OpenLoopAttackPolicy::OpenLoopAttackPolicy(double p_prime,
                                           const TransmissionPolicy& tx)
    : p_prime_(p_prime) {
  if (!(p_prime >= 0.0 && p_prime <= tx.p())) {
    throw ValidationError("open-loop attack rate p' must lie in [0, p]");
  }
}

double collision_probability(const TransmissionPolicy& tx,
                             const ClosedLoopAttackPolicy& atk) {
  const double p = tx.p();
  double q = 0.0;
  double geom = p;  // p (1 - p)^(k - 1)
  for (double w : atk.head()) {
    q += w * geom;
    geom *= 1.0 - p;
  }
  // Tail: sum_{j>=1} m (1-r) r^(j-1) p (1-p)^(K+j-1)
  //     = m (1-r) p (1-p)^K / (1 - r (1-p)).
  if (atk.tail_mass() > 0.0) {
    const double r = atk.tail_ratio();
    q += atk.tail_mass() * (1.0 - r) * geom / (1.0 - r * (1.0 - p));
  }
  return q;
}

double collision_probability(const TransmissionPolicy& tx,
                             const OpenLoopAttackPolicy& atk) {
  return tx.p() * atk.p_prime();
}

ClosedLoopAttackPolicy dominant_closed_loop() {
  return ClosedLoopAttackPolicy({1.0});
}

OpenLoopAttackPolicy dominant_open_loop(const TransmissionPolicy& tx) {
  return OpenLoopAttackPolicy(tx.p(), tx);
}

}  // namespace busoff
