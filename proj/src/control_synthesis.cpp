#include "busoff/control_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "busoff/errors.hpp"
#include "busoff/linalg.hpp"

namespace busoff {
namespace {

// Spectral norm of a symmetric matrix.
double sym_norm(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::LLT<Eigen::MatrixXd> factor_gain_denominator(
    const Eigen::MatrixXd& P, const LinearSystem& sys, const CostSpec& cost) {
  const Eigen::MatrixXd S =
      linalg::symmetrize(sys.B.transpose() * P * sys.B + cost.R);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("B'PB + R is not positive definite");
  }
  return llt;
}

// (B'PA)' (B'PB + R)^{-1} (B'PA)
Eigen::MatrixXd correction(const Eigen::MatrixXd& P, const LinearSystem& sys,
                           const CostSpec& cost) {
  const Eigen::MatrixXd BPA = sys.B.transpose() * P * sys.A;
  const auto llt = factor_gain_denominator(P, sys, cost);
  return BPA.transpose() * llt.solve(BPA);
}

void check_probability(double p, std::string_view what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError(std::string(what) + " must lie in (0, 1), got " +
                          std::to_string(p));
  }
}

int require_horizon(const CostSpec& cost) {
  if (!cost.horizon) {
    throw ValidationError("finite-horizon recursion needs cost.horizon");
  }
  return *cost.horizon;
}

}  // namespace

void CostSpec::validate(Eigen::Index states, Eigen::Index inputs) const {
  linalg::require_shape(Q, states, states, "Q");
  linalg::require_shape(R, inputs, inputs, "R");
  linalg::require_finite(Q, "Q");
  linalg::require_finite(R, "R");
  if (!linalg::is_psd(Q)) {
    throw ValidationError("Q must be symmetric positive semidefinite");
  }
  if (!linalg::is_pd(R)) {
    throw ValidationError("R must be symmetric positive definite");
  }
  if (horizon && *horizon < 1) {
    throw ValidationError("horizon must be >= 1");
  }
}

std::string_view to_string(AttackerKind kind) {
  switch (kind) {
    case AttackerKind::None: return "none";
    case AttackerKind::ClosedLoop: return "closed";
    case AttackerKind::OpenLoop: return "open";
  }
  return "?";
}

std::string_view to_string(FixedPointStatus status) {
  switch (status) {
    case FixedPointStatus::Converged: return "converged";
    case FixedPointStatus::Diverged: return "diverged";
    case FixedPointStatus::Undetermined: return "undetermined";
  }
  return "?";
}

double effective_arrival(AttackerKind kind, double p) {
  return kind == AttackerKind::None ? p : p * (1.0 - p);
}

double RiccatiLadder::value(const Eigen::VectorXd& x, bool prev_alpha,
                            int k) const {
  const auto& s = stages.at(static_cast<std::size_t>(k));
  const Eigen::MatrixXd M = prev_alpha ? s.P1 : Eigen::MatrixXd(s.P1 + s.P2);
  return x.dot(M * x) + s.c;
}

double OpenLoopLadder::value(const Eigen::VectorXd& x, int k) const {
  const auto idx = static_cast<std::size_t>(k);
  return x.dot(P.at(idx) * x) + c.at(idx);
}

Eigen::MatrixXd riccati_gain(const Eigen::MatrixXd& P,
                             const LinearSystem& sys, const CostSpec& cost) {
  const auto llt = factor_gain_denominator(P, sys, cost);
  return -llt.solve(sys.B.transpose() * P * sys.A);
}

Eigen::MatrixXd modified_riccati_step(const Eigen::MatrixXd& P,
                                      const LinearSystem& sys,
                                      const CostSpec& cost, double rho) {
  linalg::require_shape(P, sys.states(), sys.states(), "P");
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ValidationError("arrival probability rho must lie in [0, 1]");
  }
  Eigen::MatrixXd next = sys.A.transpose() * P * sys.A + cost.Q;
  if (rho > 0.0) next -= rho * correction(P, sys, cost);
  return linalg::symmetrize(next);
}

RiccatiLadder backward_closed_loop(const LinearSystem& sys,
                                   const CostSpec& cost, double p) {
  sys.validate();
  cost.validate(sys.states(), sys.inputs());
  check_probability(p, "transmission probability");
  const int N = require_horizon(cost);
  const Eigen::Index n = sys.states();

  RiccatiLadder ladder;
  ladder.p = p;
  ladder.stages.resize(static_cast<std::size_t>(N) + 1);
  ladder.gains.resize(static_cast<std::size_t>(N));

  auto& last = ladder.stages.back();
  last.P1 = cost.Q;
  last.P2 = Eigen::MatrixXd::Zero(n, n);
  last.P = cost.Q;
  last.c = 0.0;

  for (int k = N; k >= 1; --k) {
    const auto& cur = ladder.stages[static_cast<std::size_t>(k)];
    auto& prev = ladder.stages[static_cast<std::size_t>(k - 1)];
    prev.P1 = linalg::symmetrize(sys.A.transpose() * cur.P * sys.A + cost.Q);
    prev.P2 = linalg::symmetrize(-p * correction(cur.P1, sys, cost));
    prev.P = prev.P1 + (1.0 - p) * prev.P2;
    prev.c = (cur.P * sys.sigma_v).trace() + cur.c;
    ladder.gains[static_cast<std::size_t>(k - 1)] =
        riccati_gain(cur.P1, sys, cost);
  }
  return ladder;
}

OpenLoopLadder backward_bernoulli(const LinearSystem& sys,
                                  const CostSpec& cost, double rho) {
  sys.validate();
  cost.validate(sys.states(), sys.inputs());
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw ValidationError("arrival probability rho must lie in [0, 1]");
  }
  const int N = require_horizon(cost);

  OpenLoopLadder ladder;
  ladder.rho = rho;
  ladder.P.resize(static_cast<std::size_t>(N) + 1);
  ladder.c.resize(static_cast<std::size_t>(N) + 1);
  ladder.gains.resize(static_cast<std::size_t>(N));
  ladder.P.back() = cost.Q;
  ladder.c.back() = 0.0;
  for (int k = N; k >= 1; --k) {
    const auto i = static_cast<std::size_t>(k);
    ladder.P[i - 1] = modified_riccati_step(ladder.P[i], sys, cost, rho);
    ladder.c[i - 1] = (ladder.P[i] * sys.sigma_v).trace() + ladder.c[i];
    ladder.gains[i - 1] = riccati_gain(ladder.P[i], sys, cost);
  }
  return ladder;
}

OpenLoopLadder backward_open_loop(const LinearSystem& sys,
                                  const CostSpec& cost, double p) {
  check_probability(p, "transmission probability");
  return backward_bernoulli(sys, cost, p * (1.0 - p));
}

StabilityReport riccati_fixed_point(const LinearSystem& sys,
                                    const CostSpec& cost, double rho,
                                    const FixedPointOptions& opts) {
  sys.validate();
  cost.validate(sys.states(), sys.inputs());
  if (!(opts.tol > 0.0) || opts.max_iter < 1) {
    throw ValidationError("fixed-point tolerance and iteration cap must be > 0");
  }
  const RhoMinBounds bounds = rho_min_bounds(sys.A);

  StabilityReport report;
  report.rho = rho;
  report.rho_min_lower = bounds.lower;
  report.rho_min_upper = bounds.upper;
  report.residuals.reserve(static_cast<std::size_t>(
      std::min(opts.max_iter, 4096)));

  std::vector<double> norms;
  Eigen::MatrixXd P = cost.Q;
  for (int j = 1; j <= opts.max_iter; ++j) {
    const Eigen::MatrixXd next = modified_riccati_step(P, sys, cost, rho);
    const double residual = sym_norm(next - P);
    P = next;
    report.iterations = j;
    report.residuals.push_back(residual);
    if (!P.allFinite() || !std::isfinite(residual)) {
      report.status = FixedPointStatus::Diverged;
      return report;
    }
    const double norm = sym_norm(P);
    norms.push_back(norm);
    if (norm > opts.divergence_norm) {
      report.status = FixedPointStatus::Diverged;
      return report;
    }
    if (residual <= opts.tol) {
      report.status = FixedPointStatus::Converged;
      report.P_inf = P;
      return report;
    }
  }

  // Out of iterations: call it divergence only if both the norm and the
  // residual kept growing across the final window.
  const auto w = static_cast<std::size_t>(std::max(1, opts.growth_window));
  const auto& r = report.residuals;
  if (r.size() > w) {
    const bool norm_grew = norms.back() > norms[norms.size() - 1 - w];
    const bool residual_grew = r.back() >= r[r.size() - 1 - w];
    report.status = norm_grew && residual_grew ? FixedPointStatus::Diverged
                                               : FixedPointStatus::Undetermined;
  } else {
    report.status = FixedPointStatus::Undetermined;
  }
  return report;
}

RhoMinBounds rho_min_bounds(const Eigen::MatrixXd& A, double unit_tol) {
  linalg::require_shape(A, A.rows(), A.rows(), "A");
  if (A.size() == 0) return {};
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  double max_sq = 0.0;
  double prod_sq = 1.0;
  bool any = false;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double mod = std::abs(es.eigenvalues()(i));
    if (mod > 1.0 + unit_tol) {
      any = true;
      max_sq = std::max(max_sq, mod * mod);
      prod_sq *= mod * mod;
    }
  }
  if (!any) return {};
  return {1.0 - 1.0 / max_sq, 1.0 - 1.0 / prod_sq};
}

double rho_min_empirical(const LinearSystem& sys, const CostSpec& cost,
                         double tol_rho, const FixedPointOptions& opts) {
  sys.validate();
  cost.validate(sys.states(), sys.inputs());
  if (!(tol_rho > 0.0)) throw ValidationError("tol_rho must be > 0");
  if (!linalg::is_controllable(sys.A, sys.B)) {
    throw ValidationError(
        "precondition failed: (A, B) is not controllable "
        "(rank of [B, AB, ...] < n)");
  }
  if (!linalg::is_controllable(sys.A, linalg::psd_sqrt(cost.Q))) {
    throw ValidationError(
        "precondition failed: (A, Q^{1/2}) is not controllable "
        "(rank of [Q^{1/2}, A Q^{1/2}, ...] < n)");
  }

  auto converges = [&](double rho) {
    return riccati_fixed_point(sys, cost, rho, opts).converged();
  };

  double lo = rho_min_bounds(sys.A).lower;
  double hi = 1.0;
  if (converges(lo)) return lo;
  if (!converges(hi)) {
    throw DivergenceError("Riccati iteration does not converge even at rho = 1");
  }
  while (hi - lo > tol_rho) {
    const double mid = 0.5 * (lo + hi);
    (converges(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

StationaryPolicy stationary_policy(const LinearSystem& sys,
                                   const CostSpec& cost, double p,
                                   AttackerKind kind,
                                   const FixedPointOptions& opts) {
  if (kind == AttackerKind::None) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw ValidationError("transmission probability must lie in (0, 1]");
    }
  } else {
    check_probability(p, "transmission probability");
  }

  StationaryPolicy policy;
  policy.kind = kind;
  policy.p = p;
  policy.rho = effective_arrival(kind, p);
  policy.report = riccati_fixed_point(sys, cost, policy.rho, opts);
  if (!policy.report.converged()) {
    throw DivergenceError(
        "modified Riccati iteration " +
        std::string(to_string(policy.report.status)) + " at rho = " +
        std::to_string(policy.rho) + " (rho_min >= " +
        std::to_string(policy.report.rho_min_lower) +
        "); adjust the transmission probability p");
  }

  if (kind != AttackerKind::ClosedLoop) {
    policy.P = *policy.report.P_inf;
    policy.P1 = policy.P;
    policy.K = riccati_gain(policy.P, sys, cost);
    policy.c = (policy.P * sys.sigma_v).trace();
    return policy;
  }

  // Closed-loop attacker: run the stage recursion of backward_closed_loop
  // until P stops moving.
  Eigen::MatrixXd P1 = cost.Q;
  Eigen::MatrixXd P = cost.Q;
  for (int j = 1; j <= opts.max_iter; ++j) {
    const Eigen::MatrixXd P1_next =
        linalg::symmetrize(sys.A.transpose() * P * sys.A + cost.Q);
    const Eigen::MatrixXd P2_next =
        linalg::symmetrize(-p * correction(P1, sys, cost));
    const Eigen::MatrixXd P_next = P1_next + (1.0 - p) * P2_next;
    const double residual = sym_norm(P_next - P);
    P1 = P1_next;
    P = P_next;
    if (!P.allFinite() || sym_norm(P) > opts.divergence_norm) break;
    if (residual <= opts.tol) {
      // One more stage so that P1 and P2 are both taken at the fixed point.
      policy.P = P;
      policy.P1 = linalg::symmetrize(sys.A.transpose() * P * sys.A + cost.Q);
      policy.P2 = linalg::symmetrize(-p * correction(policy.P1, sys, cost));
      policy.K = riccati_gain(policy.P1, sys, cost);
      policy.c = (policy.P * sys.sigma_v).trace();
      return policy;
    }
  }
  throw DivergenceError(
      "closed-loop stage recursion does not settle at p = " +
      std::to_string(p) + "; adjust the transmission probability p");
}

}  // namespace busoff
