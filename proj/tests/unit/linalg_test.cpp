#include "busoff/linalg.hpp"

#include <cmath>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "busoff/errors.hpp"
#include "test_util.hpp"

namespace busoff::linalg {
namespace {

using Eigen::MatrixXd;
using testing::max_abs_diff;

TEST(MatrixExponential, ZeroIsIdentity) {
  EXPECT_EQ(matrix_exponential(MatrixXd::Zero(3, 3)), MatrixXd::Identity(3, 3));
}

TEST(MatrixExponential, Nilpotent) {
  MatrixXd N(2, 2);
  N << 0, 1, 0, 0;
  MatrixXd expected(2, 2);
  expected << 1, 1, 0, 1;
  EXPECT_LT(max_abs_diff(matrix_exponential(N), expected), 1e-15);
}

TEST(MatrixExponential, Rotation) {
  const double th = 2.3;
  MatrixXd W(2, 2);
  W << 0, -th, th, 0;
  MatrixXd expected(2, 2);
  expected << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  EXPECT_LT(max_abs_diff(matrix_exponential(W), expected), 1e-12);
}

TEST(MatrixExponential, DiagonalMatchesScalarExp) {
  const Eigen::Vector3d d(-3.0, 0.5, 4.0);
  const MatrixXd E = matrix_exponential(MatrixXd(d.asDiagonal()));
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(E(i, i) / std::exp(d(i)), 1.0, 1e-12);
  }
}

// The series is cut at 1e-12, so agreement is checked to about that level.
// Eigen's Pade-based implementation is an independent oracle.
TEST(MatrixExponential, AgreesWithEigenPade) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 1 + trial % 6;
    const double scale = trial < 20 ? 0.3 : 3.0;
    const MatrixXd M = testing::random_matrix(rng, n, n, scale);
    const MatrixXd oracle = M.exp();
    const double rel = max_abs_diff(matrix_exponential(M), oracle) /
                       std::max(1.0, oracle.cwiseAbs().maxCoeff());
    EXPECT_LT(rel, 1e-11) << "trial " << trial;
  }
}

TEST(Spectral, RadiusAndNorm) {
  MatrixXd A(2, 2);
  A << 0, -1, 1, 0;
  EXPECT_NEAR(spectral_radius(A), 1.0, 1e-14);
  MatrixXd U(2, 2);
  U << 1, 10, 0, 1;
  EXPECT_NEAR(spectral_radius(U), 1.0, 1e-14);
  // sigma_max of [[1,10],[0,1]] = 5 + sqrt(26)
  EXPECT_NEAR(spectral_norm(U), 5.0 + std::sqrt(26.0), 1e-12);
}

TEST(Psd, SqrtSquaresBack) {
  std::mt19937_64 rng(3);
  for (int n = 1; n <= 5; ++n) {
    const MatrixXd S = testing::random_spd(rng, n);
    const MatrixXd R = psd_sqrt(S);
    EXPECT_TRUE(is_symmetric(R));
    EXPECT_LT(max_abs_diff(R * R, S), 1e-10);
  }
}

TEST(Psd, SqrtOfSingularPsd) {
  MatrixXd S = MatrixXd::Zero(3, 3);
  S(1, 1) = 4.0;
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected(1, 1) = 2.0;
  EXPECT_LT(max_abs_diff(psd_sqrt(S), expected), 1e-15);
  EXPECT_TRUE(is_psd(S));
  EXPECT_FALSE(is_pd(S));
}

TEST(Psd, RejectsIndefiniteAndAsymmetric) {
  MatrixXd S(2, 2);
  S << 1, 0, 0, -1;
  EXPECT_FALSE(is_psd(S));
  S << 1, 1, 0, 1;
  EXPECT_FALSE(is_symmetric(S));
  EXPECT_FALSE(is_psd(S));
}

TEST(Controllability, DoubleIntegrator) {
  MatrixXd A(2, 2), B(2, 1);
  A << 1, 0.1, 0, 1;
  B << 0, 1;
  EXPECT_TRUE(is_controllable(A, B));
  EXPECT_EQ(numerical_rank(controllability_matrix(A, B)), 2);
  B << 1, 0;
  EXPECT_FALSE(is_controllable(A, B));
}

TEST(Validation, ShapeAndFiniteness) {
  EXPECT_THROW(require_shape(MatrixXd::Zero(2, 3), 2, 2, "A"), ValidationError);
  EXPECT_NO_THROW(require_shape(MatrixXd::Zero(2, 2), 2, 2, "A"));
  MatrixXd M = MatrixXd::Zero(2, 2);
  M(0, 1) = std::nan("");
  EXPECT_FALSE(all_finite(M));
  EXPECT_THROW(require_finite(M, "M"), ValidationError);
}

}  // namespace
}  // namespace busoff::linalg
