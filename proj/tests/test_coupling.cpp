#include "spikeslab/coupling.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

using namespace spikeslab;
using testutil::normal_cdf;
using testutil::random_data;

namespace {

Hyperparams hyper(Index n, Index J)
{
  Hyperparams h;
  h.rho0 = static_cast<double>(n);
  h.J = J;
  return h;
}

SamplerConfig exact_config()
{
  SamplerConfig c;
  c.algorithm = Algorithm::exact;
  c.kernel.kind = KernelKind::exact_gaussian;
  return c;
}

std::string pattern_key(std::uint64_t pattern)
{
  std::string s(3, '0');
  for (int j = 0; j < 3; ++j)
    if ((pattern >> j) & 1u) s[j] = '1';
  return s;
}

} // namespace

TEST(Coupling, BernoulliDisagreementIsTotalVariation)
{
  rng::Engine e(rng::Stream(1));
  const int n = 20000;
  for (double p1 : {0.1, 0.5, 0.8})
    for (double p2 : {0.05, 0.5, 0.9}) {
      int disagree = 0, first = 0, second = 0;
      for (int k = 0; k < n; ++k) {
        const auto [a, b] = coupling::bernoulli_maximal_coupling(p1, p2, e);
        disagree += a != b;
        first += a;
        second += b;
      }
      const double tv = std::abs(p1 - p2);
      EXPECT_NEAR(disagree / double(n), tv, 4 * std::sqrt(std::max(tv * (1 - tv), 1e-4) / n));
      EXPECT_NEAR(first / double(n), p1, 4 * std::sqrt(p1 * (1 - p1) / n));
      EXPECT_NEAR(second / double(n), p2, 4 * std::sqrt(p2 * (1 - p2) / n));
    }
}

TEST(Coupling, GaussianMeetProbabilityAndMarginals)
{
  rng::Engine e(rng::Stream(2));
  const int n = 20000;
  const auto a = coupling::MvNormal::isotropic(1, 1.0);
  for (double dm : {0.5, 1.0, 2.0}) {
    Vector m(1);
    m << dm;
    const coupling::MvNormal b(m, Matrix::Identity(1, 1));
    int met = 0;
    double s2 = 0, ss2 = 0;
    for (int k = 0; k < n; ++k) {
      const auto d = coupling::gaussian_maximal_coupling(a, b, e);
      met += d.equal;
      EXPECT_EQ(d.equal, d.first == d.second);
      s2 += d.second[0];
      ss2 += d.second[0] * d.second[0];
    }
    const double expect = 2 * normal_cdf(-dm / 2);
    EXPECT_NEAR(met / double(n), expect, 4 * std::sqrt(expect * (1 - expect) / n));
    const double mean2 = s2 / n;
    EXPECT_NEAR(mean2, dm, 4 / std::sqrt(n));
    EXPECT_NEAR(ss2 / n - mean2 * mean2, 1.0, 0.05);
  }
}

TEST(Coupling, GaussianMultivariateDensity)
{
  Vector m(2);
  m << 1.0, -1.0;
  Matrix c(2, 2);
  c << 2.0, 0.5, 0.5, 1.0;
  const coupling::MvNormal g(m, c);
  Vector x(2);
  x << 0.3, 0.2;
  const Vector r = x - m;
  const double expect = -0.5 * r.dot(c.inverse() * r) - 0.5 * std::log(c.determinant()) - std::log(2 * std::numbers::pi);
  EXPECT_NEAR(g.log_pdf(x), expect, 1e-12);
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW(coupling::MvNormal(m, bad), std::invalid_argument);
}

TEST(Coupling, IdenticalStatesStayTogether)
{
  const auto d = random_data(20, 5, 3);
  const LinearModel m(d);
  const auto h = hyper(20, 3);
  ChainState s;
  s.delta = SparsityVector::from_bits({1, 0, 1, 0, 0});
  s.theta = testutil::random_theta(5, 4);
  ChainState x = s, y = s;
  for (int t = 0; t < 20; ++t) {
    auto step = coupling::coupled_exact_step(x, y, m, h, rng::Stream(5).child("iter", t));
    EXPECT_TRUE(step.met);
    x = step.first;
    y = step.second;
  }
}

TEST(Coupling, CoupledStepPreservesTheSingleChainMarginal)
{
  const auto d = random_data(25, 3, 6, ModelKind::linear, 2, 0.4);
  const LinearModel m(d);
  const auto h = hyper(25, 3);
  const auto cfg = exact_config();
  ChainState x, y;
  x.delta = SparsityVector::from_bits({1, 0, 0});
  x.theta = testutil::random_theta(3, 7);
  y.delta = SparsityVector::from_bits({0, 1, 1});
  y.theta = testutil::random_theta(3, 8);

  const int n = 6000;
  std::map<std::string, int> coupled, alone_x, coupled_y, alone_y;
  double cx = 0, ax = 0;
  for (int k = 0; k < n; ++k) {
    const auto step = coupling::coupled_exact_step(x, y, m, h, rng::Stream(9).child("iter", k));
    ++coupled[step.first.delta.to_string()];
    ++coupled_y[step.second.delta.to_string()];
    cx += step.first.theta[0];
    const auto sx = exact_step(x, m, h, cfg, rng::Stream(10).child("iter", k));
    const auto sy = exact_step(y, m, h, cfg, rng::Stream(11).child("iter", k));
    ++alone_x[sx.delta.to_string()];
    ++alone_y[sy.delta.to_string()];
    ax += sx.theta[0];
  }
  auto compare = [&](std::map<std::string, int>& a, std::map<std::string, int>& b) {
    for (std::uint64_t pat = 0; pat < 8; ++pat) {
      const std::string key = pattern_key(pat);
      const double pa = a[key] / double(n), pb = b[key] / double(n);
      const double se = std::sqrt((pa * (1 - pa) + pb * (1 - pb)) / n);
      EXPECT_NEAR(pa, pb, 4.5 * se + 1e-3) << key;
    }
  };
  compare(coupled, alone_x);
  compare(coupled_y, alone_y);
  EXPECT_NEAR(cx / n, ax / n, 0.05);
}

TEST(Coupling, BoundTerms)
{
  EXPECT_EQ(coupling::tv_bound_term(10, 1, 3), 6.0);
  EXPECT_EQ(coupling::tv_bound_term(10, 1, 9), 0.0);
  EXPECT_EQ(coupling::tv_bound_term(20, 5, 0), 3.0);
  EXPECT_EQ(coupling::tv_bound_term(20, 5, 1), 3.0);
  EXPECT_EQ(coupling::tv_bound_term(3, 5, 0), 0.0);
}

TEST(Coupling, CurveAndMixingTime)
{
  std::vector<coupling::CoupledTrace> reps(4);
  const Index taus[] = {3, 5, 7, 9};
  for (int r = 0; r < 4; ++r) {
    reps[r].lag = 1;
    reps[r].meeting_time = taus[r];
  }
  const auto c = coupling::bound_curve(reps, {6, 0, 2, 4});
  ASSERT_EQ(c.t_grid, (std::vector<Index>{0, 2, 4, 6}));
  EXPECT_DOUBLE_EQ(c.bound[0], (2 + 4 + 6 + 8) / 4.0);
  EXPECT_DOUBLE_EQ(c.bound[3], (0 + 0 + 0 + 2) / 4.0);
  EXPECT_EQ(coupling::mixing_time(c, 0.5), 6u);
  EXPECT_EQ(coupling::mixing_time(c, 2.0), 4u);
  EXPECT_FALSE(coupling::mixing_time(c, 0.1).has_value());

  std::ostringstream a, b;
  coupling::write_curve_csv(a, c);
  coupling::write_replicas_csv(b, reps);
  EXPECT_EQ(a.str().rfind("t,bound,stderr\n0,5,", 0), 0u);
  EXPECT_EQ(b.str().rfind("replica_id,seed,lag,tau,censored\n", 0), 0u);
}

TEST(Coupling, CoupledRunsMeetAndAreThreadIndependent)
{
  const auto d = random_data(30, 8, 12, ModelKind::linear, 2, 3.0);
  const LinearModel m(d);
  const auto h = hyper(30, 8);
  std::vector<Index> grid(301);
  for (Index t = 0; t < grid.size(); ++t) grid[t] = t;
  const auto a = coupling::estimate_mixing_bound(m, h, exact_config(), 2, 6, grid, 300, rng::Stream(13), 1);
  const auto b = coupling::estimate_mixing_bound(m, h, exact_config(), 2, 6, grid, 300, rng::Stream(13), 3);
  ASSERT_EQ(a.replicas.size(), 6u);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_EQ(a.replicas[r].meeting_time, b.replicas[r].meeting_time);
    EXPECT_FALSE(a.replicas[r].censored);
    EXPECT_GT(a.replicas[r].meeting_time, 2u);
  }
  EXPECT_EQ(a.curve.bound, b.curve.bound);
  EXPECT_TRUE(a.t_mix.has_value());
}

TEST(Coupling, RejectsUnsupportedConfigurations)
{
  const auto d = random_data(20, 4, 14, ModelKind::logistic);
  const LogisticModel lm(d);
  const auto h = hyper(20, 2);
  EXPECT_THROW(coupling::estimate_mixing_bound(lm, h, exact_config(), 1, 2, {0}, 10, rng::Stream(1)), ConfigError);
  const auto ld = random_data(20, 4, 14);
  const LinearModel m(ld);
  auto cfg = exact_config();
  cfg.kernel.kind = KernelKind::mala;
  EXPECT_THROW(coupling::estimate_mixing_bound(m, h, cfg, 1, 2, {0}, 10, rng::Stream(1)), ConfigError);
  EXPECT_THROW(coupling::estimate_mixing_bound(m, h, exact_config(), 0, 2, {0}, 10, rng::Stream(1)),
               std::invalid_argument);
}
