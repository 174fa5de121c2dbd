#include "psf/gauss.hpp"

#include <cmath>

#include "psf/error.hpp"

namespace psf {
namespace {

// Above this, ln(1 + e^x) - x < 1e-13 and e^x starts to lose range.
constexpr double kSoftplusThreshold = 30.0;

void require_same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) throw ConfigError(std::string(what) + ": length mismatch");
}

}  // namespace

double softplus(double x) {
  if (x > kSoftplusThreshold) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Eigen::VectorXd softplus(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = softplus(x[i]);
  return out;
}

double softplus_inverse(double y) {
  // ln(e^y - 1) = y + ln(1 - e^-y)
  if (y > kSoftplusThreshold) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd LowRankGaussian::covariance() const {
  Eigen::MatrixXd s = factor * factor.transpose();
  s.diagonal() += variance();
  return s;
}

double kl_diag_to_std(const DiagGaussian& q) {
  require_same_length(q.mean, q.rho, "kl_diag_to_std");
  double quad = 0.0;
  double log_var = 0.0;
  for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
    const double s2 = softplus(q.rho[i]);
    quad += q.mean[i] * q.mean[i] + s2;
    log_var += std::log(s2);
  }
  return 0.5 * (quad - static_cast<double>(q.mean.size()) - log_var);
}

namespace {

struct LemmaParts {
  Eigen::VectorXd diag;         // softplus(rho)
  Eigen::MatrixXd scaled;       // D^-1 B
  Eigen::MatrixXd inner;        // I_k + B^T D^-1 B
  double sum_log_diag = 0.0;
};

LemmaParts lemma_parts(const LowRankGaussian& q) {
  require_same_length(q.mean, q.rho, "logdet_lowrank");
  if (q.factor.rows() != q.mean.size()) throw ConfigError("logdet_lowrank: factor rows != h");
  LemmaParts p;
  p.diag = q.variance();
  for (Eigen::Index i = 0; i < p.diag.size(); ++i) {
    if (!(p.diag[i] > 0.0)) {
      throw NumericError("logdet_lowrank: variance underflow at index " + std::to_string(i));
    }
    p.sum_log_diag += std::log(p.diag[i]);
  }
  p.scaled = p.diag.cwiseInverse().asDiagonal() * q.factor;
  p.inner = q.factor.transpose() * p.scaled;
  p.inner.diagonal().array() += 1.0;
  return p;
}

}  // namespace

double logdet_lowrank(const LowRankGaussian& q) {
  const LemmaParts p = lemma_parts(q);
  double inner_logdet = 0.0;
  if (p.inner.rows() > 0) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(p.inner);
    const Eigen::MatrixXd& u = lu.matrixLU();
    double sign = lu.permutationP().determinant();
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double pivot = u(i, i);
      if (!std::isfinite(pivot) || pivot == 0.0) {
        throw NumericError("logdet_lowrank: singular inner k x k matrix");
      }
      if (pivot < 0) sign = -sign;
      inner_logdet += std::log(std::abs(pivot));
    }
    // I + B^T D^-1 B is positive definite; a negative determinant means the
    // factorization has broken down numerically.
    if (sign < 0 || !std::isfinite(inner_logdet)) {
      throw NumericError("logdet_lowrank: inner matrix is not positive definite");
    }
  }
  return inner_logdet + p.sum_log_diag;
}

double kl_lowrank_to_std(const LowRankGaussian& q) {
  const double logdet = logdet_lowrank(q);
  double quad = 0.0;
  for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
    const double s2 = softplus(q.rho[i]);
    quad += q.mean[i] * q.mean[i] + s2 + q.factor.row(i).squaredNorm();
  }
  return 0.5 * (quad - static_cast<double>(q.mean.size()) - logdet);
}

double kl_general(const Eigen::VectorXd& q_mean, const Eigen::MatrixXd& q_cov,
                  const Eigen::VectorXd& p_mean, const Eigen::MatrixXd& p_cov) {
  const Eigen::Index d = q_mean.size();
  if (p_mean.size() != d || q_cov.rows() != d || q_cov.cols() != d || p_cov.rows() != d ||
      p_cov.cols() != d) {
    throw ConfigError("kl_general: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> q_chol(q_cov);
  const Eigen::LLT<Eigen::MatrixXd> p_chol(p_cov);
  if (q_chol.info() != Eigen::Success) throw NumericError("kl_general: first covariance not positive definite");
  if (p_chol.info() != Eigen::Success) throw NumericError("kl_general: second covariance not positive definite");

  const auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const Eigen::VectorXd diff = p_mean - q_mean;
  const double trace = p_chol.solve(q_cov).trace();
  const double mahalanobis = diff.dot(p_chol.solve(diff));
  return 0.5 * (logdet(p_chol) - logdet(q_chol) - static_cast<double>(d) + trace + mahalanobis);
}

Eigen::VectorXd sample_diag(const DiagGaussian& q, const NoiseDraw& noise) {
  require_same_length(q.mean, noise.epsilon, "sample_diag");
  return q.mean + q.variance().cwiseSqrt().cwiseProduct(noise.epsilon);
}

Eigen::VectorXd sample_lowrank(const LowRankGaussian& q, const NoiseDraw& noise) {
  require_same_length(q.mean, noise.epsilon, "sample_lowrank");
  if (noise.zeta.size() != q.factor.cols()) throw ConfigError("sample_lowrank: zeta length != k");
  Eigen::VectorXd out = q.mean + q.variance().cwiseSqrt().cwiseProduct(noise.epsilon);
  if (q.factor.cols() > 0) out += q.factor * noise.zeta;
  return out;
}

DiagKlGradient kl_diag_gradient(const DiagGaussian& q) {
  DiagKlGradient g;
  g.mean = q.mean;
  g.rho.resize(q.rho.size());
  for (Eigen::Index i = 0; i < q.rho.size(); ++i) {
    const double s2 = softplus(q.rho[i]);
    g.rho[i] = 0.5 * (1.0 - 1.0 / s2) * sigmoid(q.rho[i]);
  }
  return g;
}

LowRankKlGradient kl_lowrank_gradient(const LowRankGaussian& q) {
  const LemmaParts p = lemma_parts(q);
  LowRankKlGradient g;
  g.mean = q.mean;
  // S^-1 B = D^-1 B M^-1 with M = I + B^T D^-1 B.
  Eigen::MatrixXd s_inv_b;
  Eigen::VectorXd s_inv_diag = p.diag.cwiseInverse();
  if (p.inner.rows() > 0) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(p.inner);
    if (ldlt.info() != Eigen::Success) throw NumericError("kl_lowrank_gradient: singular inner matrix");
    s_inv_b = ldlt.solve(p.scaled.transpose()).transpose();
    s_inv_diag -= s_inv_b.cwiseProduct(p.scaled).rowwise().sum();
  } else {
    s_inv_b = Eigen::MatrixXd::Zero(q.factor.rows(), 0);
  }
  g.rho.resize(q.rho.size());
  for (Eigen::Index i = 0; i < q.rho.size(); ++i) {
    g.rho[i] = 0.5 * (1.0 - s_inv_diag[i]) * sigmoid(q.rho[i]);
  }
  g.factor = q.factor - s_inv_b;
  return g;
}

}  // namespace psf
