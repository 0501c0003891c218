#include "busoff/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "busoff/errors.hpp"

namespace busoff::linalg {

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M, double tol) {
  require_shape(M, M.rows(), M.rows(), "matrix_exponential argument");
  require_finite(M, "matrix_exponential argument");
  const Eigen::Index n = M.rows();
  if (n == 0) return M;

  // Scale so the 1-norm is at most 1/2; the Taylor tail then shrinks by at
  // least a factor 2 per term.
  const double norm1 = M.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Eigen::MatrixXd X = M / std::ldexp(1.0, squarings);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k < 64; ++k) {
    term = term * X / static_cast<double>(k);
    sum += term;
    const double term_norm = term.cwiseAbs().colwise().sum().maxCoeff();
    const double sum_norm = sum.cwiseAbs().colwise().sum().maxCoeff();
    if (term_norm <= tol * std::max(1.0, sum_norm)) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) {
  return 0.5 * (M + M.transpose());
}

bool is_symmetric(const Eigen::MatrixXd& M, double tol) {
  if (M.rows() != M.cols()) return false;
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_psd(const Eigen::MatrixXd& M, double tol) {
  return is_symmetric(M, tol) && min_eigenvalue(symmetrize(M)) >= -tol;
}

bool is_pd(const Eigen::MatrixXd& M, double tol) {
  return is_symmetric(M, tol) && min_eigenvalue(symmetrize(M)) > tol;
}

double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(M));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() *
         es.eigenvectors().transpose();
}

int numerical_rank(const Eigen::MatrixXd& M, double rel_tol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (sv(0) == 0.0) return 0;
  return static_cast<int>((sv.array() > rel_tol * sv(0)).count());
}

Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd C(n, n * m);
  Eigen::MatrixXd block = B;
  for (Eigen::Index i = 0; i < n; ++i) {
    C.middleCols(i * m, m) = block;
    block = A * block;
  }
  return C;
}

bool is_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     double rel_tol) {
  return numerical_rank(controllability_matrix(A, B), rel_tol) == A.rows();
}

bool all_finite(const Eigen::MatrixXd& M) { return M.allFinite(); }

void require_shape(const Eigen::MatrixXd& M, Eigen::Index rows,
                   Eigen::Index cols, std::string_view what) {
  if (M.rows() != rows || M.cols() != cols) {
    throw ValidationError(std::string(what) + ": expected " +
                          std::to_string(rows) + "x" + std::to_string(cols) +
                          ", got " + std::to_string(M.rows()) + "x" +
                          std::to_string(M.cols()));
  }
}

void require_finite(const Eigen::MatrixXd& M, std::string_view what) {
  if (!M.allFinite()) {
    throw ValidationError(std::string(what) + " has non-finite entries");
  }
}

}  // namespace busoff::linalg
