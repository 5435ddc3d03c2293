#include "spikeslab/kernels.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace spikeslab;
using testutil::random_data;

TEST(Kernels, LinearConditionalMatchesNormalEquations)
{
  const auto d = random_data(30, 5, 1);
  const std::vector<Index> support{0, 2, 3};
  const auto cg = linear_conditional(d, support, 2.0);
  Matrix Xd(30, 3);
  for (int k = 0; k < 3; ++k) Xd.col(k) = d.X.col(support[k]);
  const Matrix A = Xd.transpose() * Xd + 2.0 * Matrix::Identity(3, 3);
  const Vector mean = A.ldlt().solve(Xd.transpose() * d.y);
  EXPECT_LE((cg.mean - mean).norm(), 1e-10);
  EXPECT_LE((cg.covariance() - A.inverse()).norm(), 1e-10);
}

TEST(Kernels, ExactDrawCovariance)
{
  const auto d = random_data(12, 3, 2);
  const auto delta = SparsityVector::from_bits({1, 1, 0});
  const auto cg = linear_conditional(d, delta.support(), 1.0);
  const Matrix cov = cg.covariance();
  rng::Engine e(rng::Stream(3));
  const int n = 40000;
  Vector s = Vector::Zero(2);
  Matrix s2 = Matrix::Zero(2, 2);
  for (int k = 0; k < n; ++k) {
    const Vector v = exact_conditional_draw(d, delta, 1.0, e) - cg.mean;
    s += v;
    s2 += v * v.transpose();
  }
  const Vector mean = s / n;
  const Matrix emp = s2 / n;
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(mean[i], 0.0, 4 * std::sqrt(cov(i, i) / n));
    for (int j = 0; j < 2; ++j)
      EXPECT_NEAR(emp(i, j), cov(i, j), 4 * std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / n));
  }
  EXPECT_THROW(exact_conditional_draw(d, SparsityVector(3), 1.0, e), std::invalid_argument);
}

TEST(Kernels, MalaTinyStepAlwaysAccepts)
{
  const auto d = random_data(40, 3, 4, ModelKind::logistic);
  const LogisticModel m(d);
  Hyperparams h;
  h.rho0 = 40;
  const auto delta = SparsityVector::from_bits({1, 0, 1});
  rng::Engine e(rng::Stream(5));
  Vector u = Vector::Zero(2);
  int accepted = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto r = mala_step(m, delta, u, h, 1e-8, e);
    accepted += r.accepted;
    u = r.state;
  }
  EXPECT_GE(accepted, 999);
}

TEST(Kernels, SymmetricTargetHasSymmetricDensity)
{
  // a zero design leaves only the slab, a centred Gaussian
  RegressionData d;
  d.X = Matrix::Zero(5, 1);
  d.y = Vector::Zero(5);
  const LinearModel m(d);
  Hyperparams h;
  h.rho1 = 1.0;
  h.rho0 = 10.0;
  const auto delta = SparsityVector::full(1);
  const auto e0 = detail::conditional_log_density(m, delta.support(), Vector::Zero(1), h.rho1);
  EXPECT_EQ(e0.grad[0], 0.0);
  Vector v(1);
  v << 0.3;
  EXPECT_DOUBLE_EQ(detail::conditional_log_density(m, delta.support(), v, h.rho1).log_density,
                   detail::conditional_log_density(m, delta.support(), -v, h.rho1).log_density);
}

TEST(Kernels, MalaLeavesLinearConditionalInvariant)
{
  // one active coordinate: the target is N(mean, var) in closed form; compare the
  // chain's empirical distribution with a Kolmogorov-Smirnov statistic on thinned draws
  const auto d = random_data(20, 2, 6);
  const LinearModel m(d);
  Hyperparams h;
  h.rho0 = 20;
  h.rho1 = 1;
  const auto delta = SparsityVector::from_bits({1, 0});
  const auto cg = linear_conditional(d, delta.support(), h.rho1);
  const double mu = cg.mean[0], sd = std::sqrt(cg.covariance()(0, 0));
  const double step = 0.5 * sd * sd;
  rng::Engine e(rng::Stream(7));
  Vector u(1);
  u << mu;
  std::vector<double> draws;
  for (int k = 0; k < 200000; ++k) {
    u = mala_step(m, delta, u, h, step, e).state;
    if (k % 20 == 0) draws.push_back(u[0]);
  }
  std::sort(draws.begin(), draws.end());
  double ks = 0;
  const double n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double F = testutil::normal_cdf((draws[i] - mu) / sd);
    ks = std::max({ks, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(n));  // 1% critical value
}

TEST(Kernels, SgldUpdateIsAGradientStepPlusNoise)
{
  const auto d = random_data(10, 3, 8, ModelKind::logistic);
  const LogisticModel m(d);
  Hyperparams h;
  h.gamma = 0.01;
  h.rho1 = 2.0;
  h.rho0 = 10.0;
  const auto delta = SparsityVector::from_bits({1, 1, 0});
  Vector u(2);
  u << 0.3, -0.2;
  std::vector<Index> all(10);
  for (Index i = 0; i < 10; ++i) all[i] = i;
  ParamVector theta = ParamVector::Zero(3);
  theta[0] = 0.3;
  theta[1] = -0.2;
  const Vector g = m.grad(theta, delta, delta.support());
  Vector z(2);
  z << 0.5, -1.0;
  const Vector expect = u + h.gamma * (g - h.rho1 * u) + std::sqrt(2 * h.gamma) * z;
  EXPECT_LE((sgld_update(m, delta, u, h, all, z) - expect).norm(), 1e-12);

  // gamma -> 0 freezes the chain
  h.gamma = 1e-300;
  EXPECT_LE((sgld_update(m, delta, u, h, all, z) - u).norm(), 1e-140);
}

TEST(Kernels, SgldStepNeedsBatchSize)
{
  const auto d = random_data(10, 2, 9, ModelKind::logistic);
  const LogisticModel m(d);
  Hyperparams h;
  rng::Engine a(rng::Stream(1)), b(rng::Stream(2));
  EXPECT_THROW(sgld_step(m, SparsityVector::full(2), Vector::Zero(2), h, a, b), std::invalid_argument);
  h.B = 4;
  EXPECT_EQ(sgld_step(m, SparsityVector::full(2), Vector::Zero(2), h, a, b).size(), 2);
}

TEST(Kernels, RefreshTouchesOnlyInactive)
{
  Hyperparams h;
  h.rho0 = 4.0;
  ParamVector theta = ParamVector::Constant(4, 9.0);
  const auto delta = SparsityVector::from_bits({1, 0, 0, 1});
  const rng::Stream s(10);
  refresh_inactive(theta, delta, h, s);
  EXPECT_EQ(theta[0], 9.0);
  EXPECT_EQ(theta[3], 9.0);
  EXPECT_DOUBLE_EQ(theta[1], 0.5 * s.gaussian_at(1));
  EXPECT_DOUBLE_EQ(theta[2], 0.5 * s.gaussian_at(2));
}
