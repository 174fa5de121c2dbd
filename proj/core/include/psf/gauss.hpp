#pragma once

#include <Eigen/Dense>

namespace psf {

// ln(1 + e^x), overflow-safe.
double softplus(double x);
Eigen::VectorXd softplus(const Eigen::VectorXd& x);
// Inverse of softplus on (0, inf): ln(e^y - 1).
double softplus_inverse(double y);
// d softplus / dx.
double sigmoid(double x);

// Gaussian with diagonal covariance; variance = softplus(rho).
struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd variance() const { return softplus(rho); }
};

// Gaussian with covariance diag(softplus(rho)) + factor * factor^T.
struct LowRankGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;
  Eigen::MatrixXd factor;  // h x k

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index rank() const { return factor.cols(); }
  Eigen::VectorXd variance() const { return softplus(rho); }
  // Dense h x h covariance. Only for tests and small h.
  Eigen::MatrixXd covariance() const;
};

// Standard-normal noise for one reparametrized draw. zeta is empty for the
// diagonal family.
struct NoiseDraw {
  Eigen::VectorXd epsilon;
  Eigen::VectorXd zeta;
};

// KL(q || N(0, I)) for a diagonal Gaussian.
double kl_diag_to_std(const DiagGaussian& q);

// ln det(diag(d) + B B^T) via the matrix-determinant lemma. Never forms the
// h x h matrix. Throws NumericError when the inner k x k system degenerates.
double logdet_lowrank(const LowRankGaussian& q);

// KL(q || N(0, I)) for the diagonal-plus-low-rank family.
double kl_lowrank_to_std(const LowRankGaussian& q);

// KL(N(q_mean, q_cov) || N(p_mean, p_cov)) for dense covariances. Used as a
// reference implementation; O(d^3). Throws NumericError when a covariance is
// not positive definite.
double kl_general(const Eigen::VectorXd& q_mean, const Eigen::MatrixXd& q_cov,
                  const Eigen::VectorXd& p_mean, const Eigen::MatrixXd& p_cov);

// mean + sqrt(variance) .* epsilon
Eigen::VectorXd sample_diag(const DiagGaussian& q, const NoiseDraw& noise);
// mean + sqrt(d) .* epsilon + B * zeta
Eigen::VectorXd sample_lowrank(const LowRankGaussian& q, const NoiseDraw& noise);

struct DiagKlGradient {
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;
};

struct LowRankKlGradient {
  Eigen::VectorXd mean;
  Eigen::VectorXd rho;
  Eigen::MatrixXd factor;
};

// Exact gradients of the two closed-form KLs with respect to the
// unconstrained parameters. The low-rank case uses the Woodbury identity
// S^-1 B = D^-1 B (I + B^T D^-1 B)^-1 so S is never formed either.
DiagKlGradient kl_diag_gradient(const DiagGaussian& q);
LowRankKlGradient kl_lowrank_gradient(const LowRankGaussian& q);

}  // namespace psf
