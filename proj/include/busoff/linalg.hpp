#pragma once

#include <string_view>

#include <Eigen/Core>

namespace busoff::linalg {

/// exp(M) by scaling and squaring of a truncated Taylor series. The series is
/// cut once a term falls below `tol` relative to the partial sum.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M,
                                   double tol = 1e-12);

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M);

bool is_symmetric(const Eigen::MatrixXd& M, double tol = 1e-10);

/// Symmetric with smallest eigenvalue >= -tol.
bool is_psd(const Eigen::MatrixXd& M, double tol = 1e-10);

/// Symmetric with smallest eigenvalue > tol.
bool is_pd(const Eigen::MatrixXd& M, double tol = 1e-10);

double min_eigenvalue(const Eigen::MatrixXd& symmetric);

/// Largest singular value.
double spectral_norm(const Eigen::MatrixXd& M);

double spectral_radius(const Eigen::MatrixXd& M);

/// Principal square root of a symmetric PSD matrix (negative eigenvalues from
/// round-off are clamped to zero).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M);

/// Numerical rank; singular values below rel_tol * sigma_max are dropped.
int numerical_rank(const Eigen::MatrixXd& M, double rel_tol = 1e-8);

/// [B, AB, ..., A^{n-1}B]
Eigen::MatrixXd controllability_matrix(const Eigen::MatrixXd& A,
                                       const Eigen::MatrixXd& B);

bool is_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     double rel_tol = 1e-8);

bool all_finite(const Eigen::MatrixXd& M);

/// Throws ValidationError naming `what` unless M is rows x cols.
void require_shape(const Eigen::MatrixXd& M, Eigen::Index rows,
                   Eigen::Index cols, std::string_view what);

/// Throws ValidationError naming `what` on NaN/Inf.
void require_finite(const Eigen::MatrixXd& M, std::string_view what);

}  // namespace busoff::linalg
