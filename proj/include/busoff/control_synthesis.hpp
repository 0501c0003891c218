#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "busoff/system_model.hpp"

namespace busoff {

/// Quadratic cost  x_N' Q x_N + sum_t x_t' Q x_t + (applied) u_t' R u_t.
/// `horizon` is empty for the infinite-horizon (average cost) problem.
struct CostSpec {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  std::optional<int> horizon;

  void validate(Eigen::Index states, Eigen::Index inputs) const;
};

/// Which attacker the controller is playing against. `None` means plain
/// Bernoulli(p) packet arrival with no jamming.
enum class AttackerKind { None, ClosedLoop, OpenLoop };

std::string_view to_string(AttackerKind kind);

/// Probability that a transmitted control packet is applied at a given step
/// in steady state: p without attacker, p (1 - p) under either dominant
/// attack.
double effective_arrival(AttackerKind kind, double p);

/// One stage of the closed-loop-attacker value function
///   V_k(x, alpha_{k-1}) = x' [P1 + (1 - alpha_{k-1}) P2] x + c.
struct ClosedLoopStage {
  Eigen::MatrixXd P1;
  Eigen::MatrixXd P2;
  Eigen::MatrixXd P;  // P1 + (1 - p) P2
  double c = 0.0;
};

struct RiccatiLadder {
  double p = 0.0;
  std::vector<ClosedLoopStage> stages;  // k = 0..N
  std::vector<Eigen::MatrixXd> gains;   // K_0..K_{N-1}

  int horizon() const { return static_cast<int>(gains.size()); }
  double value(const Eigen::VectorXd& x, bool prev_alpha, int k = 0) const;
};

/// V_k(x) = x' P_k x + c_k for i.i.d. packet arrival with probability rho.
struct OpenLoopLadder {
  double rho = 0.0;
  std::vector<Eigen::MatrixXd> P;     // k = 0..N
  std::vector<double> c;              // k = 0..N
  std::vector<Eigen::MatrixXd> gains; // K_0..K_{N-1}

  int horizon() const { return static_cast<int>(gains.size()); }
  double value(const Eigen::VectorXd& x, int k = 0) const;
};

/// Finite-horizon optimal control against the dominant closed-loop attack,
/// where the control lands iff alpha_{t-1} = 0 and alpha_t = 1.
RiccatiLadder backward_closed_loop(const LinearSystem& sys,
                                   const CostSpec& cost, double p);

/// Finite-horizon optimal control against the dominant open-loop attack
/// (i.i.d. arrival with probability p (1 - p)).
OpenLoopLadder backward_open_loop(const LinearSystem& sys,
                                  const CostSpec& cost, double p);

/// Same recursion with an arbitrary i.i.d. arrival probability rho.
OpenLoopLadder backward_bernoulli(const LinearSystem& sys,
                                  const CostSpec& cost, double rho);

/// g_rho(P) = A'PA + Q - rho (B'PA)' (B'PB + R)^{-1} (B'PA), symmetrized.
Eigen::MatrixXd modified_riccati_step(const Eigen::MatrixXd& P,
                                      const LinearSystem& sys,
                                      const CostSpec& cost, double rho);

/// -(B'PB + R)^{-1} B'PA
Eigen::MatrixXd riccati_gain(const Eigen::MatrixXd& P,
                             const LinearSystem& sys, const CostSpec& cost);

struct FixedPointOptions {
  double tol = 1e-9;
  int max_iter = 100000;
  double divergence_norm = 1e12;
  int growth_window = 50;
};

enum class FixedPointStatus { Converged, Diverged, Undetermined };

std::string_view to_string(FixedPointStatus status);

struct StabilityReport {
  double rho = 0.0;
  double rho_min_lower = 0.0;
  double rho_min_upper = 0.0;
  std::optional<double> rho_min_empirical;
  FixedPointStatus status = FixedPointStatus::Undetermined;
  std::optional<Eigen::MatrixXd> P_inf;
  int iterations = 0;
  std::vector<double> residuals;  // ||P_{j+1} - P_j||_2, j = 0, 1, ...

  bool converged() const { return status == FixedPointStatus::Converged; }
};

/// Iterates P_{j+1} = g_rho(P_j) from P_0 = Q.
StabilityReport riccati_fixed_point(const LinearSystem& sys,
                                    const CostSpec& cost, double rho,
                                    const FixedPointOptions& opts = {});

struct RhoMinBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// 1 - 1/max|lambda_u|^2 and 1 - 1/prod|lambda_u|^2 over the eigenvalues of
/// A with modulus > 1 + unit_tol. Both are zero when A has none.
RhoMinBounds rho_min_bounds(const Eigen::MatrixXd& A, double unit_tol = 1e-9);

/// Bisection on the converge/diverge outcome of riccati_fixed_point over
/// [rho_min_bounds().lower, 1]. Requires (A, B) and (A, Q^{1/2})
/// controllable.
double rho_min_empirical(const LinearSystem& sys, const CostSpec& cost,
                         double tol_rho = 0.005,
                         const FixedPointOptions& opts = {});

struct StationaryPolicy {
  AttackerKind kind = AttackerKind::ClosedLoop;
  double p = 0.0;
  double rho = 0.0;
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;   // P_inf
  Eigen::MatrixXd P1;  // A' P_inf A + Q (closed loop); equals P otherwise
  std::optional<Eigen::MatrixXd> P2;  // closed loop only
  double c = 0.0;      // trace(P_inf sigma_v), the per-step cost constant
  StabilityReport report;  // g_rho fixed-point certificate
};

/// Infinite-horizon policy against the dominant attacker of `kind`.
///
/// Requires g_rho with rho = effective_arrival(kind, p) to converge. For the
/// open-loop (and attack-free) case the policy is K = gain(P_inf). For the
/// closed-loop case the closed-loop backward recursion is run to its own
/// stationary point, P = A'PA + Q - p(1-p) (B'P1A)'(B'P1B+R)^{-1}(B'P1A) with
/// P1 = A'PA + Q, and K = gain(P1).
StationaryPolicy stationary_policy(const LinearSystem& sys,
                                   const CostSpec& cost, double p,
                                   AttackerKind kind,
                                   const FixedPointOptions& opts = {});

}  // namespace busoff
