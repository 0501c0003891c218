#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace busoff {

/// Defender transmits at each step independently with probability p, so
/// inter-transmission gaps are Geometric(p). p = 1 (periodic transmission)
/// is accepted for attack-free reference runs.
class TransmissionPolicy {
 public:
  explicit TransmissionPolicy(double p);
  double p() const { return p_; }

 private:
  double p_;
};

/// Closed-loop attacker: after each observed transmission it draws a waiting
/// time k >= 1 with P(k) = iota_k and jams once that many steps have elapsed.
///
/// Stored as an explicit head iota_1..iota_K plus an optional geometric tail:
/// for k > K, iota_k = tail_mass * (1 - tail_ratio) * tail_ratio^(k - K - 1).
class ClosedLoopAttackPolicy {
 public:
  explicit ClosedLoopAttackPolicy(std::vector<double> head,
                                  double tail_mass = 0.0,
                                  double tail_ratio = 0.0);

  /// iota = delta_k.
  static ClosedLoopAttackPolicy deterministic(int k);

  const std::vector<double>& head() const { return head_; }
  double tail_mass() const { return tail_mass_; }
  double tail_ratio() const { return tail_ratio_; }

  /// P(t^A = k) for k >= 1.
  double weight(int k) const;

  bool is_immediate() const;  // iota_1 == 1

  template <class Rng>
  int sample_wait(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    for (std::size_t i = 0; i < head_.size(); ++i) {
      if (u < head_[i]) return static_cast<int>(i) + 1;
      u -= head_[i];
    }
    const int K = static_cast<int>(head_.size());
    if (tail_mass_ <= 0.0) {
      // Round-off left u just above the head mass; take the last support.
      for (int i = K; i >= 1; --i) {
        if (head_[i - 1] > 0.0) return i;
      }
      return 1;
    }
    if (tail_ratio_ <= 0.0) return K + 1;
    const double g = unif(rng);
    const double j = std::floor(std::log1p(-g) / std::log(tail_ratio_));
    return K + 1 + static_cast<int>(std::min(j, 1e9));
  }

 private:
  std::vector<double> head_;
  double tail_mass_;
  double tail_ratio_;
};

/// Open-loop attacker: jams i.i.d. Bernoulli(p') with no observations.
class OpenLoopAttackPolicy {
 public:
  OpenLoopAttackPolicy(double p_prime, const TransmissionPolicy& tx);
  double p_prime() const { return p_prime_; }

 private:
  double p_prime_;
};

/// q = sum_k iota_k p (1 - p)^(k - 1), the per-message collision probability.
double collision_probability(const TransmissionPolicy& tx,
                             const ClosedLoopAttackPolicy& atk);

/// q = p p' for the open-loop attacker.
double collision_probability(const TransmissionPolicy& tx,
                             const OpenLoopAttackPolicy& atk);

/// Jam immediately after every observed transmission (iota = delta_1).
ClosedLoopAttackPolicy dominant_closed_loop();

/// Jam at the transmitter's own rate (p' = p).
OpenLoopAttackPolicy dominant_open_loop(const TransmissionPolicy& tx);

/// Time-space realization of a closed-loop attack policy for one episode.
/// The attacker sees alpha_{t-1} before choosing beta_t. Each observed
/// transmission withdraws any pending attempt and schedules a new one
/// t^A steps after that transmission. The attacker is idle until the first
/// transmission it observes.
class ClosedLoopAttacker {
 public:
  explicit ClosedLoopAttacker(ClosedLoopAttackPolicy policy)
      : policy_(std::move(policy)) {}

  /// Returns beta_t for step t given the previous transmission decision.
  template <class Rng>
  bool next(std::int64_t t, bool prev_alpha, Rng& rng) {
    if (prev_alpha) fire_at_ = (t - 1) + policy_.sample_wait(rng);
    if (fire_at_ && *fire_at_ == t) {
      fire_at_.reset();
      return true;
    }
    return false;
  }

  std::optional<std::int64_t> pending() const { return fire_at_; }

 private:
  ClosedLoopAttackPolicy policy_;
  std::optional<std::int64_t> fire_at_;
};

}  // namespace busoff
