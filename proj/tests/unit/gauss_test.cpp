#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "psf/error.hpp"
#include "psf/gauss.hpp"
#include "psf/rng.hpp"
#include "unit/test_util.hpp"

namespace psf {
namespace {

using test::random_matrix;
using test::random_vector;
using test::rel_err;

const double kRhoOne = std::log(std::exp(1.0) - 1.0);  // softplus(kRhoOne) = 1

// Dense KL(N(m, S) || N(0, I)) straight from the definition.
double dense_kl_to_std(const Eigen::VectorXd& m, const Eigen::MatrixXd& S) {
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (S.trace() + m.squaredNorm() - static_cast<double>(m.size()) - logdet);
}

TEST(Softplus, HandValues) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(20.0), 20.0000000020611537, 1e-12);
  // e^-20 - e^-40 / 2 to the shown digits.
  EXPECT_NEAR(softplus(-20.0), 2.0611536203143e-9, 1e-21);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1e-300);
}

TEST(Softplus, MonotoneAndAboveRamp) {
  double prev = softplus(-40.0);
  for (double x = -39.9; x <= 40.0; x += 0.1) {
    const double y = softplus(x);
    EXPECT_GE(y, prev);
    // Strictness is only representable while ln(1+e^-|x|) exceeds the ulp of x.
    if (std::abs(x) <= 30.0) {
      EXPECT_GT(y, std::max(0.0, x)) << x;
      EXPECT_GT(y, prev);
    } else {
      EXPECT_GE(y, std::max(0.0, x));
    }
    prev = y;
  }
}

TEST(Softplus, InverseRoundTrips) {
  for (double y : {1e-12, 1e-3, 0.5, 1.0, 7.0, 45.0}) EXPECT_LT(rel_err(softplus(softplus_inverse(y)), y), 1e-12);
}

TEST(KlDiag, HandValues) {
  DiagGaussian prior{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Constant(3, kRhoOne)};
  EXPECT_NEAR(kl_diag_to_std(prior), 0.0, 1e-15);

  DiagGaussian q1{Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, kRhoOne)};
  EXPECT_NEAR(kl_diag_to_std(q1), 0.5, 1e-15);

  DiagGaussian q2{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, softplus_inverse(4.0))};
  EXPECT_NEAR(kl_diag_to_std(q2), 0.5 * (8.0 - 2.0 - 2.0 * std::log(4.0)), 1e-12);
  EXPECT_NEAR(kl_diag_to_std(q2), 1.6137, 5e-5);
}

TEST(LogdetLowrank, HandValues) {
  LowRankGaussian q{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, kRhoOne), Eigen::MatrixXd::Ones(2, 1)};
  EXPECT_NEAR(logdet_lowrank(q), std::log(3.0), 1e-14);

  std::mt19937_64 rng(1);
  LowRankGaussian z{Eigen::VectorXd::Zero(5), random_vector(rng, 5, -1, 1), Eigen::MatrixXd::Zero(5, 2)};
  EXPECT_NEAR(logdet_lowrank(z), z.variance().array().log().sum(), 1e-14);
}

TEST(LogdetLowrank, MatchesDenseDeterminant) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 50);
    const int k = 1 + static_cast<int>(rng() % 5);
    LowRankGaussian q;
    q.mean = Eigen::VectorXd::Zero(h);
    const Eigen::VectorXd delta = random_vector(rng, h, 0.5, 2.0);
    q.rho = delta.unaryExpr([](double d) { return softplus_inverse(d * d); });
    q.factor = random_matrix(rng, h, k, -1, 1);
    const Eigen::MatrixXd S = q.covariance();
    const double dense = Eigen::PartialPivLU<Eigen::MatrixXd>(S).determinant();
    ASSERT_GT(dense, 0.0);
    EXPECT_LT(rel_err(logdet_lowrank(q), std::log(dense)), 1e-10) << "h=" << h << " k=" << k;
  }
}

TEST(LogdetLowrank, UnderflowedVarianceIsReported) {
  LowRankGaussian q{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, -800.0), Eigen::MatrixXd::Ones(2, 1)};
  EXPECT_THROW(logdet_lowrank(q), NumericError);
}

TEST(KlLowrank, HandValues) {
  LowRankGaussian q{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, kRhoOne), Eigen::MatrixXd::Ones(2, 1)};
  EXPECT_NEAR(kl_lowrank_to_std(q), 0.5 * (4.0 - 2.0 - std::log(3.0)), 1e-14);
  EXPECT_NEAR(kl_lowrank_to_std(q), 0.4507, 5e-5);

  LowRankGaussian prior{Eigen::VectorXd::Zero(4), Eigen::VectorXd::Constant(4, kRhoOne), Eigen::MatrixXd::Zero(4, 2)};
  EXPECT_NEAR(kl_lowrank_to_std(prior), 0.0, 1e-15);
}

TEST(KlLowrank, MatchesDenseFormulaAndGeneralKl) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + static_cast<int>(rng() % 20);
    const int k = 1 + static_cast<int>(rng() % 3);
    LowRankGaussian q{random_vector(rng, h, -1, 1), random_vector(rng, h, -1, 1), random_matrix(rng, h, k, -1, 1)};
    const double kl = kl_lowrank_to_std(q);
    const Eigen::MatrixXd S = q.covariance();
    EXPECT_LT(rel_err(kl, dense_kl_to_std(q.mean, S)), 1e-10);
    EXPECT_LT(rel_err(kl, kl_general(q.mean, S, Eigen::VectorXd::Zero(h), Eigen::MatrixXd::Identity(h, h))), 1e-10);
    EXPECT_GE(kl, 0.0);
  }
}

TEST(KlLowrank, ZeroFactorEqualsDiagonalBitForBit) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 30);
    const Eigen::VectorXd m = random_vector(rng, h, -2, 2);
    const Eigen::VectorXd rho = random_vector(rng, h, -3, 3);
    LowRankGaussian lr{m, rho, Eigen::MatrixXd::Zero(h, 3)};
    EXPECT_EQ(kl_lowrank_to_std(lr), kl_diag_to_std(DiagGaussian{m, rho}));
  }
}

TEST(KlGeneral, HandValues) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  EXPECT_NEAR(kl_general(Eigen::VectorXd::Ones(1), one, zero, one), 0.5, 1e-15);
  EXPECT_NEAR(kl_general(zero, 4.0 * one, zero, one), 0.5 * (4.0 - 1.0 - std::log(4.0)), 1e-15);

  std::mt19937_64 rng(5);
  const Eigen::MatrixXd A = random_matrix(rng, 4, 4, -1, 1);
  const Eigen::MatrixXd S = A * A.transpose() + Eigen::MatrixXd::Identity(4, 4);
  const Eigen::VectorXd m = random_vector(rng, 4, -1, 1);
  EXPECT_NEAR(kl_general(m, S, m, S), 0.0, 1e-12);
}

TEST(KlGeneral, AgainstNonStandardReference) {
  // 1-D closed form: ln(s_p/s_q) + (s_q^2 + (m_q - m_p)^2) / (2 s_p^2) - 1/2.
  const double mq = 0.3, vq = 2.0, mp = -1.0, vp = 0.5;
  const double want = 0.5 * std::log(vp / vq) + (vq + (mq - mp) * (mq - mp)) / (2 * vp) - 0.5;
  EXPECT_NEAR(kl_general(Eigen::VectorXd::Constant(1, mq), Eigen::MatrixXd::Constant(1, 1, vq),
                         Eigen::VectorXd::Constant(1, mp), Eigen::MatrixXd::Constant(1, 1, vp)),
              want, 1e-14);
}

TEST(KlGeneral, RejectsIndefiniteCovariance) {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW(kl_general(Eigen::VectorXd::Zero(2), bad, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)),
               NumericError);
  EXPECT_THROW(kl_general(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3),
                          Eigen::MatrixXd::Identity(3, 3)),
               Error);
}

TEST(Sampling, HandValues) {
  DiagGaussian d{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, softplus_inverse(4.0))};
  NoiseDraw n{Eigen::VectorXd::Ones(1), Eigen::VectorXd()};
  EXPECT_NEAR(sample_diag(d, n)(0), 2.0, 1e-14);
  NoiseDraw zero{Eigen::VectorXd::Zero(1), Eigen::VectorXd()};
  EXPECT_EQ(sample_diag(d, zero), d.mean);

  LowRankGaussian q{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, kRhoOne), Eigen::MatrixXd::Ones(2, 1)};
  NoiseDraw nz{Eigen::Vector2d(1.0, -1.0), Eigen::VectorXd::Constant(1, 2.0)};
  const Eigen::VectorXd s = sample_lowrank(q, nz);
  EXPECT_NEAR(s(0), 3.0, 1e-14);
  EXPECT_NEAR(s(1), 1.0, 1e-14);
  NoiseDraw z2{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)};
  EXPECT_EQ(sample_lowrank(q, z2), q.mean);
}

TEST(Sampling, DiagonalEmpiricalCovariance) {
  std::mt19937_64 r(6);
  DiagGaussian q{random_vector(r, 3, -1, 1), random_vector(r, 3, -1, 1)};
  Engine e = make_engine(6, "diag-moments");
  const int n = 1000000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  NoiseDraw nd{Eigen::VectorXd(3), Eigen::VectorXd()};
  for (int i = 0; i < n; ++i) {
    fill_normal(e, nd.epsilon);
    const Eigen::VectorXd x = sample_diag(q, nd) - q.mean;
    sum += x;
    sq += x.cwiseProduct(x);
  }
  const Eigen::VectorXd var = q.variance();
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(sum(i) / n), 0.01);
    EXPECT_LT(rel_err(sq(i) / n, var(i)), 0.02);
  }
}

TEST(KlGradient, DiagMeanGradientIsMean) {
  std::mt19937_64 r(7);
  DiagGaussian q{random_vector(r, 6, -2, 2), random_vector(r, 6, -2, 2)};
  EXPECT_EQ(kl_diag_gradient(q).mean, q.mean);
}

TEST(KlGradient, LowRankMatchesFiniteDifferences) {
  std::mt19937_64 r(8);
  LowRankGaussian q{random_vector(r, 5, -1, 1), random_vector(r, 5, -1, 1), random_matrix(r, 5, 2, -1, 1)};
  const LowRankKlGradient g = kl_lowrank_gradient(q);
  const double eps = 1e-5;
  auto check = [&](double& x, double analytic) {
    const double x0 = x;
    x = x0 + eps;
    const double up = kl_lowrank_to_std(q);
    x = x0 - eps;
    const double down = kl_lowrank_to_std(q);
    x = x0;
    const double fd = (up - down) / (2 * eps);
    EXPECT_NEAR(analytic, fd, 1e-4 * std::max(1.0, std::abs(fd)));
  };
  for (int i = 0; i < 5; ++i) {
    check(q.mean(i), g.mean(i));
    check(q.rho(i), g.rho(i));
    for (int j = 0; j < 2; ++j) check(q.factor(i, j), g.factor(i, j));
  }
}

}  // namespace
}  // namespace psf
