#include "busoff/control_synthesis.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "busoff/errors.hpp"
#include "busoff/linalg.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace busoff {
namespace {

using Eigen::MatrixXd;
using testing::max_abs_diff;

LinearSystem scalar_sys(double a, double b = 1.0, double sigma = 0.0) {
  return LinearSystem::make(MatrixXd::Constant(1, 1, a), MatrixXd::Constant(1, 1, b),
                            {}, MatrixXd::Constant(1, 1, sigma));
}

CostSpec scalar_cost(std::optional<int> horizon = std::nullopt) {
  return {MatrixXd::Constant(1, 1, 1.0), MatrixXd::Constant(1, 1, 1.0), horizon};
}

std::vector<double> scalar_gains(const RiccatiLadder& lad) {
  std::vector<double> k;
  for (const auto& K : lad.gains) k.push_back(K(0, 0));
  return k;
}

struct RandomProblem {
  LinearSystem sys;
  CostSpec cost;
};

RandomProblem random_problem(std::mt19937_64& rng, int horizon) {
  std::uniform_int_distribution<int> dn(1, 4), dm(1, 2);
  const int n = dn(rng), m = dm(rng);
  RandomProblem pr;
  pr.sys = LinearSystem::make(testing::random_matrix(rng, n, n, 0.7),
                              testing::random_matrix(rng, n, m),
                              {}, 0.1 * testing::random_spd(rng, n));
  pr.cost = {testing::random_spd(rng, n), testing::random_spd(rng, m), horizon};
  return pr;
}

TEST(CostSpec, Validation) {
  CostSpec c = scalar_cost(3);
  EXPECT_NO_THROW(c.validate(1, 1));
  c.R(0, 0) = 0.0;
  EXPECT_THROW(c.validate(1, 1), ValidationError);
  c = scalar_cost(0);
  EXPECT_THROW(c.validate(1, 1), ValidationError);
  c = scalar_cost();
  c.Q(0, 0) = -1.0;
  EXPECT_THROW(c.validate(1, 1), ValidationError);
  EXPECT_THROW(scalar_cost().validate(2, 1), ValidationError);
}

TEST(ClosedLoopLadder, OneStepHandComputation) {
  const auto lad = backward_closed_loop(scalar_sys(2.0), scalar_cost(1), 0.5);
  ASSERT_EQ(lad.horizon(), 1);
  EXPECT_DOUBLE_EQ(lad.gains[0](0, 0), -1.0);
  EXPECT_DOUBLE_EQ(lad.stages[0].P1(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(lad.stages[0].P2(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(lad.stages[1].P1(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(lad.stages[1].P2(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(lad.value(Eigen::VectorXd::Constant(1, 1.0), false), 4.0);
  const oracle::Scalar s{2, 1, 1, 1};
  EXPECT_NEAR(oracle::exhaustive_closed_loop_cost(s, 0.5, {-1.0}, 1.0, false), 4.0,
              1e-12);
  EXPECT_NEAR(oracle::exhaustive_closed_loop_cost(s, 0.5, {-1.0}, 1.0, true), 5.0,
              1e-12);
}

TEST(ClosedLoopLadder, AnchorGainIsOneStepLqr) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = random_problem(rng, 1);
    const auto lad = backward_closed_loop(pr.sys, pr.cost, 0.4);
    const MatrixXd& A = pr.sys.A;
    const MatrixXd& B = pr.sys.B;
    const MatrixXd& Q = pr.cost.Q;
    const MatrixXd K =
        -(B.transpose() * Q * B + pr.cost.R).inverse() * B.transpose() * Q * A;
    EXPECT_LT(max_abs_diff(lad.gains[0], K), 1e-10);
  }
}

TEST(ClosedLoopLadder, ValueMatchesExhaustiveEnumeration) {
  const oracle::Scalar s{2, 1, 1, 1};
  for (double p : {0.1, 0.3, 0.5, 0.9}) {
    for (int N : {1, 2, 3, 6}) {
      const auto lad = backward_closed_loop(scalar_sys(2.0), scalar_cost(N), p);
      const auto gains = scalar_gains(lad);
      for (bool prev : {false, true}) {
        for (double x0 : {1.0, -0.7}) {
          const double v = lad.value(Eigen::VectorXd::Constant(1, x0), prev);
          const double oracle_v =
              oracle::exhaustive_closed_loop_cost(s, p, gains, x0, prev);
          EXPECT_NEAR(v, oracle_v, 1e-9 * std::max(1.0, std::abs(oracle_v)))
              << "p = " << p << ", N = " << N << ", prev = " << prev;
        }
      }
    }
  }
}

TEST(ClosedLoopLadder, FirstGainIsOptimalGivenContinuation) {
  const oracle::Scalar s{2, 1, 1, 1};
  const double p = 0.3;
  const auto lad = backward_closed_loop(scalar_sys(2.0), scalar_cost(3), p);
  auto gains = scalar_gains(lad);
  const double k_star = gains[0];
  const double best = oracle::exhaustive_closed_loop_cost(s, p, gains, 1.0, false);
  for (int i = -500; i <= 500; ++i) {
    gains[0] = k_star + 1e-3 * i;
    EXPECT_GE(oracle::exhaustive_closed_loop_cost(s, p, gains, 1.0, false),
              best - 1e-6);
  }
}

TEST(ClosedLoopLadder, SignStructureAndCostMonotone) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = random_problem(rng, 30);
    const double p = 0.2 + 0.06 * trial;
    const auto lad = backward_closed_loop(pr.sys, pr.cost, p);
    for (std::size_t k = 0; k < lad.stages.size(); ++k) {
      const auto& st = lad.stages[k];
      const double scale = std::max(1.0, st.P1.norm());
      EXPECT_TRUE(linalg::is_psd(st.P1, 1e-9 * scale));
      EXPECT_TRUE(linalg::is_psd(-st.P2, 1e-9 * scale));
      EXPECT_LT(max_abs_diff(st.P, st.P1 + (1 - p) * st.P2), 1e-9 * scale);
      if (k + 1 < lad.stages.size()) EXPECT_GE(st.c, lad.stages[k + 1].c);
    }
  }
}

TEST(ClosedLoopLadder, NoiseConstants) {
  // c_{k-1} = tr(P_k sigma) + c_k, so c_0 = sum_k tr(P_k sigma).
  const auto lad = backward_closed_loop(scalar_sys(1.1, 1.0, 0.2), scalar_cost(4), 0.4);
  double c = 0.0;
  for (int k = 4; k >= 1; --k) c += 0.2 * lad.stages[static_cast<std::size_t>(k)].P(0, 0);
  EXPECT_NEAR(lad.stages[0].c, c, 1e-12);
}

TEST(ClosedLoopLadder, RejectsBadInput) {
  EXPECT_THROW(backward_closed_loop(scalar_sys(2.0), scalar_cost(3), 0.0), ValidationError);
  EXPECT_THROW(backward_closed_loop(scalar_sys(2.0), scalar_cost(3), 1.0), ValidationError);
  EXPECT_THROW(backward_closed_loop(scalar_sys(2.0), scalar_cost(), 0.5), ValidationError);
}

TEST(OpenLoopLadder, HandComputation) {
  const auto lad = backward_open_loop(scalar_sys(1.0), scalar_cost(1), 0.5);
  EXPECT_DOUBLE_EQ(lad.P[0](0, 0), 1.875);
  EXPECT_DOUBLE_EQ(lad.rho, 0.25);
}

TEST(OpenLoopLadder, ZeroArrivalIsOpenLoopCost) {
  const auto sys = scalar_sys(1.3);
  const auto lad = backward_bernoulli(sys, scalar_cost(5), 0.0);
  double P = 1.0;
  for (int k = 4; k >= 0; --k) {
    P = 1.69 * P + 1.0;
    EXPECT_NEAR(lad.P[static_cast<std::size_t>(k)](0, 0), P, 1e-12);
  }
}

TEST(OpenLoopLadder, EqualsIteratedModifiedRiccati) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const int N = 25;
    const auto pr = random_problem(rng, N);
    const double p = 0.15 + 0.07 * trial;
    const auto lad = backward_open_loop(pr.sys, pr.cost, p);
    MatrixXd P = pr.cost.Q;
    for (int j = 0; j < N; ++j) P = modified_riccati_step(P, pr.sys, pr.cost, p * (1 - p));
    EXPECT_LT(max_abs_diff(lad.P[0], P), 1e-12 * std::max(1.0, P.norm()));
  }
}

TEST(ModifiedRiccati, Examples) {
  const auto sys = scalar_sys(2.0);
  EXPECT_NEAR(modified_riccati_step(MatrixXd::Constant(1, 1, 1.0), sys, scalar_cost(), 0.8)(0, 0),
              3.4, 1e-15);
  std::mt19937_64 rng(1);
  const auto pr = random_problem(rng, 1);
  const Eigen::Index n = pr.sys.states();
  EXPECT_LT(max_abs_diff(modified_riccati_step(MatrixXd::Zero(n, n), pr.sys, pr.cost, 0.5),
                         pr.cost.Q),
            1e-14);
}

TEST(ModifiedRiccati, UnitArrivalIsStandardRiccati) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = random_problem(rng, 1);
    const MatrixXd P = testing::random_spd(rng, pr.sys.states());
    const MatrixXd& A = pr.sys.A;
    const MatrixXd& B = pr.sys.B;
    const MatrixXd expected =
        A.transpose() * P * A + pr.cost.Q -
        A.transpose() * P * B * (B.transpose() * P * B + pr.cost.R).inverse() *
            B.transpose() * P * A;
    const MatrixXd got = modified_riccati_step(P, pr.sys, pr.cost, 1.0);
    EXPECT_LT(max_abs_diff(got, expected), 1e-10 * std::max(1.0, expected.norm()));
    EXPECT_TRUE(linalg::is_symmetric(got, 0.0));
  }
}

TEST(ModifiedRiccati, MonotoneInPAndRho) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto pr = random_problem(rng, 1);
    const Eigen::Index n = pr.sys.states();
    const MatrixXd P = testing::random_spd(rng, n);
    const MatrixXd Pp = P + testing::random_spd(rng, n, 0.0);
    const double rho = 0.1 + 0.025 * trial;
    const MatrixXd g = modified_riccati_step(P, pr.sys, pr.cost, rho);
    const MatrixXd gp = modified_riccati_step(Pp, pr.sys, pr.cost, rho);
    const double tol = 1e-9 * std::max(1.0, gp.norm());
    EXPECT_GE(linalg::min_eigenvalue(gp - g), -tol);
    const MatrixXd g_more = modified_riccati_step(P, pr.sys, pr.cost, rho + 0.1);
    EXPECT_GE(linalg::min_eigenvalue(g - g_more), -tol);
  }
}

TEST(FixedPoint, ScalarQuadraticRoot) {
  const auto rep = riccati_fixed_point(scalar_sys(2.0), scalar_cost(), 0.8);
  ASSERT_TRUE(rep.converged());
  EXPECT_NEAR((*rep.P_inf)(0, 0), oracle::scalar_fixed_point(2.0, 0.8), 1e-7);
  EXPECT_LE(rep.residuals.back(), 1e-9);
  EXPECT_EQ(rep.iterations, static_cast<int>(rep.residuals.size()));
  EXPECT_DOUBLE_EQ(rep.rho_min_lower, 0.75);
}

TEST(FixedPoint, DivergesBelowCriticalRho) {
  const auto rep = riccati_fixed_point(scalar_sys(2.0), scalar_cost(), 0.25);
  EXPECT_EQ(rep.status, FixedPointStatus::Diverged);
  EXPECT_FALSE(rep.P_inf.has_value());
}

TEST(FixedPoint, StableSystemGivesLyapunovSolution) {
  std::mt19937_64 rng(4);
  MatrixXd A = testing::random_matrix(rng, 3, 3);
  A *= 0.8 / linalg::spectral_radius(A);
  const auto sys = LinearSystem::make(A, MatrixXd::Ones(3, 1));
  const CostSpec cost{testing::random_spd(rng, 3), MatrixXd::Identity(1, 1), {}};
  const auto rep = riccati_fixed_point(sys, cost, 0.0);
  ASSERT_TRUE(rep.converged());
  // vec(P) = (I - A' kron A')^{-1} vec(Q)
  MatrixXd K(9, 9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) K.block(3 * i, 3 * j, 3, 3) = A(j, i) * A.transpose();
  const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(cost.Q.data(), 9);
  const Eigen::VectorXd vp = (MatrixXd::Identity(9, 9) - K).lu().solve(q);
  const MatrixXd P = Eigen::Map<const MatrixXd>(vp.data(), 3, 3);
  EXPECT_LT(max_abs_diff(*rep.P_inf, P), 1e-7 * P.norm());
  EXPECT_TRUE(linalg::is_psd(*rep.P_inf));
}

TEST(FixedPoint, OscillationIsUndetermined) {
  // A rotation by 90 degrees with rho = 0 never settles but does not blow up
  // for Q that is not rotation invariant.
  MatrixXd A(2, 2);
  A << 0, -1, 1, 0;
  const auto sys = LinearSystem::make(A, MatrixXd::Zero(2, 1));
  MatrixXd Q = MatrixXd::Zero(2, 2);
  Q(0, 0) = 1.0;
  FixedPointOptions opts;
  opts.max_iter = 400;
  const auto rep = riccati_fixed_point(sys, {Q, MatrixXd::Identity(1, 1), {}}, 0.0, opts);
  EXPECT_NE(rep.status, FixedPointStatus::Converged);
}

TEST(RhoMinBounds, Examples) {
  auto b = rho_min_bounds(MatrixXd::Constant(1, 1, 2.0));
  EXPECT_DOUBLE_EQ(b.lower, 0.75);
  EXPECT_DOUBLE_EQ(b.upper, 0.75);
  b = rho_min_bounds(Eigen::Vector2d(2.0, 3.0).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(b.lower, 1 - 1.0 / 9, 1e-15);
  EXPECT_NEAR(b.upper, 1 - 1.0 / 36, 1e-15);
  b = rho_min_bounds(Eigen::Vector3d(1.0, 0.5, -0.9).asDiagonal().toDenseMatrix());
  EXPECT_EQ(b.lower, 0.0);
  EXPECT_EQ(b.upper, 0.0);
  // Complex pair of modulus 2 counts twice in the product.
  MatrixXd R(2, 2);
  R << 0, -2, 2, 0;
  b = rho_min_bounds(R);
  EXPECT_NEAR(b.lower, 0.75, 1e-14);
  EXPECT_NEAR(b.upper, 1 - 1.0 / 16, 1e-14);
}

TEST(RhoMinEmpirical, ScalarTightCases) {
  const double r2 = rho_min_empirical(scalar_sys(2.0), scalar_cost());
  EXPECT_GE(r2, 0.745);
  EXPECT_LE(r2, 0.755);
  EXPECT_NEAR(rho_min_empirical(scalar_sys(1.2), scalar_cost()), 1 - 1 / 1.44, 0.005);
  EXPECT_EQ(rho_min_empirical(scalar_sys(0.5), scalar_cost()), 0.0);
}

TEST(RhoMinEmpirical, RequiresControllability) {
  const auto sys = LinearSystem::make(Eigen::Vector2d(2.0, 3.0).asDiagonal().toDenseMatrix(),
                                      Eigen::Vector2d(1.0, 0.0));
  try {
    rho_min_empirical(sys, {MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1), {}});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(A, B)"), std::string::npos) << e.what();
  }
  const auto sys2 = LinearSystem::make(Eigen::Vector2d(2.0, 3.0).asDiagonal().toDenseMatrix(),
                                       Eigen::Vector2d(1.0, 1.0));
  MatrixXd Q = MatrixXd::Zero(2, 2);
  Q(0, 0) = 1.0;
  try {
    rho_min_empirical(sys2, {Q, MatrixXd::Identity(1, 1), {}});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("Q^{1/2}"), std::string::npos) << e.what();
  }
}

TEST(StationaryPolicy, ClosedLoopMatchesLongLadder) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    const auto pr = random_problem(rng, 5000);
    const double p = 0.3 + 0.1 * trial;
    CostSpec inf = pr.cost;
    inf.horizon.reset();
    const auto pol = stationary_policy(pr.sys, inf, p, AttackerKind::ClosedLoop);
    const auto lad = backward_closed_loop(pr.sys, pr.cost, p);
    EXPECT_LT(max_abs_diff(pol.K, lad.gains[0]), 1e-6);
    EXPECT_LT(max_abs_diff(pol.P1, lad.stages[0].P1), 1e-6 * pol.P1.norm());
    ASSERT_TRUE(pol.P2.has_value());
    EXPECT_LT(max_abs_diff(*pol.P2, lad.stages[0].P2), 1e-6 * pol.P1.norm());
  }
}

TEST(StationaryPolicy, OpenLoopMatchesLongLadder) {
  std::mt19937_64 rng(7);
  auto pr = random_problem(rng, 5000);
  pr.sys.A *= 0.9 / linalg::spectral_radius(pr.sys.A);
  CostSpec inf = pr.cost;
  inf.horizon.reset();
  const auto pol = stationary_policy(pr.sys, inf, 0.5, AttackerKind::OpenLoop);
  const auto lad = backward_open_loop(pr.sys, pr.cost, 0.5);
  EXPECT_LT(max_abs_diff(pol.K, lad.gains[0]), 1e-6);
  EXPECT_FALSE(pol.P2.has_value());
  EXPECT_NEAR(pol.c, (pol.P * pr.sys.sigma_v).trace(), 1e-12);
}

TEST(StationaryPolicy, NoAttackerUnitArrivalIsLqr) {
  const auto pol = stationary_policy(scalar_sys(2.0), scalar_cost(), 1.0, AttackerKind::None);
  // Scalar DARE with a = 2, b = q = r = 1: P^2 - 4P - 1 = 0.
  const double P = 2 + std::sqrt(5.0);
  EXPECT_NEAR(pol.P(0, 0), P, 1e-8);
  EXPECT_NEAR(pol.K(0, 0), -2 * P / (P + 1), 1e-8);
}

TEST(StationaryPolicy, DivergenceAdvisesP) {
  try {
    stationary_policy(scalar_sys(2.0), scalar_cost(), 0.5, AttackerKind::ClosedLoop);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("p"), std::string::npos);
  }
}

}  // namespace
}  // namespace busoff
