#include "busoff/system_model.hpp"

#include <cmath>

#include "busoff/errors.hpp"
#include "busoff/linalg.hpp"

namespace busoff {

void LinearSystem::validate() const {
  const Eigen::Index n = A.rows();
  if (n == 0) throw ValidationError("system has zero states");
  linalg::require_shape(A, n, n, "A");
  linalg::require_shape(B, n, B.cols(), "B");
  linalg::require_shape(G, n, G.cols(), "G");
  linalg::require_shape(sigma_v, n, n, "sigma_v");
  linalg::require_finite(A, "A");
  linalg::require_finite(B, "B");
  linalg::require_finite(G, "G");
  linalg::require_finite(sigma_v, "sigma_v");
  if (!linalg::is_psd(sigma_v)) {
    throw ValidationError("sigma_v must be symmetric positive semidefinite");
  }
}

LinearSystem LinearSystem::make(Eigen::MatrixXd A, Eigen::MatrixXd B,
                                Eigen::MatrixXd G, Eigen::MatrixXd sigma_v) {
  const Eigen::Index n = A.rows();
  LinearSystem sys;
  sys.A = std::move(A);
  sys.B = std::move(B);
  sys.G = G.size() == 0 ? Eigen::MatrixXd::Identity(n, n) : std::move(G);
  sys.sigma_v =
      sigma_v.size() == 0 ? Eigen::MatrixXd::Zero(n, n) : std::move(sigma_v);
  sys.validate();
  return sys;
}

void ContinuousSystem::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError("sampling time dt must be positive and finite");
  }
  const Eigen::Index n = A.rows();
  linalg::require_shape(A, n, n, "A_c");
  linalg::require_shape(B, n, B.cols(), "B_c");
  linalg::require_shape(G, n, G.cols(), "G_c");
  linalg::require_finite(A, "A_c");
  linalg::require_finite(B, "B_c");
  linalg::require_finite(G, "G_c");
  if (sigma_v.size() != 0) {
    linalg::require_shape(sigma_v, n, n, "sigma_v");
    linalg::require_finite(sigma_v, "sigma_v");
  }
}

LinearSystem discretize_zoh(const ContinuousSystem& cs) {
  cs.validate();
  const Eigen::Index n = cs.A.rows();
  const Eigen::Index m = cs.B.cols();
  const Eigen::Index d = cs.G.cols();

  // M = [A_c  B_c  G_c]
  //     [ 0    0    0 ]
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m + d, n + m + d);
  M.topLeftCorner(n, n) = cs.A;
  M.block(0, n, n, m) = cs.B;
  M.block(0, n + m, n, d) = cs.G;
  const Eigen::MatrixXd phi = linalg::matrix_exponential(M * cs.dt);

  LinearSystem sys;
  sys.A = phi.topLeftCorner(n, n);
  sys.B = phi.block(0, n, n, m);
  sys.G = phi.block(0, n + m, n, d);
  sys.sigma_v =
      cs.sigma_v.size() == 0 ? Eigen::MatrixXd::Zero(n, n) : cs.sigma_v;
  sys.validate();
  return sys;
}

Eigen::VectorXd step(const LinearSystem& sys, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, bool alpha, bool beta,
                     const Eigen::VectorXd& w) {
  if (x.size() != sys.states()) throw ValidationError("state dimension");
  if (u.size() != sys.inputs()) throw ValidationError("input dimension");
  if (w.size() != sys.disturbances()) {
    throw ValidationError("disturbance dimension");
  }
  Eigen::VectorXd next = sys.A * x + sys.G * w;
  if (alpha && !beta) next += sys.B * u;
  return next;
}

NoiseSampler::NoiseSampler(const Eigen::MatrixXd& sigma_v)
    : factor_(sigma_v.rows(), sigma_v.cols()) {
  zero_ = sigma_v.size() == 0 || sigma_v.cwiseAbs().maxCoeff() == 0.0;
  if (zero_) {
    factor_.setZero();
    return;
  }
  factor_ = linalg::psd_sqrt(sigma_v);
}

}  // namespace busoff
