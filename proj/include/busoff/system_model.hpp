#pragma once

#include <random>

#include <Eigen/Core>

namespace busoff {

/// Discrete LTI plant with a lossy actuation channel:
///   x+ = A x + (1 - beta) alpha B u + G w + v,   v ~ N(0, sigma_v).
/// `w` is a known disturbance input; `v` is i.i.d. process noise.
struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd G;
  Eigen::MatrixXd sigma_v;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index disturbances() const { return G.cols(); }

  /// Checks shapes, finiteness and that sigma_v is symmetric PSD.
  void validate() const;

  /// G defaults to identity and sigma_v to zero.
  static LinearSystem make(Eigen::MatrixXd A, Eigen::MatrixXd B,
                           Eigen::MatrixXd G = {},
                           Eigen::MatrixXd sigma_v = {});
};

struct ContinuousSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd G;
  Eigen::MatrixXd sigma_v;  // passed through to the discrete model
  double dt = 0.0;          // seconds

  void validate() const;
};

/// Exact zero-order-hold sampling. A = exp(A_c dt); B and G come from the
/// upper-right block of exp([[A_c, [B_c G_c]], [0, 0]] dt).
LinearSystem discretize_zoh(const ContinuousSystem& cs);

/// One step of the plant without process noise. Control enters iff
/// alpha = 1 and beta = 0; otherwise zero control is applied.
Eigen::VectorXd step(const LinearSystem& sys, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u, bool alpha, bool beta,
                     const Eigen::VectorXd& w);

/// Draws v ~ N(0, sigma_v) through a symmetric square-root factor. A zero
/// covariance yields the zero vector without consuming random numbers.
class NoiseSampler {
 public:
  explicit NoiseSampler(const Eigen::MatrixXd& sigma_v);

  bool is_zero() const { return zero_; }

  template <class Rng>
  Eigen::VectorXd draw(Rng& rng) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(factor_.rows());
    if (zero_) return v;
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(factor_.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    v = factor_ * z;
    return v;
  }

 private:
  Eigen::MatrixXd factor_;
  bool zero_ = true;
};

}  // namespace busoff
