#include "spikeslab/oracle.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

using namespace spikeslab;
using testutil::random_data;

namespace {

Hyperparams hyper(double rho0)
{
  Hyperparams h;
  h.u = 1.5;
  h.rho0 = rho0;
  h.rho1 = 1.0;
  h.J = 1;
  return h;
}

} // namespace

TEST(Oracle, SmallAndLargeSystemsAgree)
{
  const auto d = random_data(15, 6, 1);
  const auto h = hyper(15.0);
  for (std::uint64_t m = 0; m < 64; ++m) {
    const auto delta = oracle::from_pattern(m, 6);
    EXPECT_NEAR(oracle::log_marginal_delta(d, delta, h), oracle::log_marginal_delta_direct(d, delta, h), 1e-9)
      << delta.to_string();
  }
}

TEST(Oracle, PatternRoundTrip)
{
  for (std::uint64_t m = 0; m < 32; ++m) EXPECT_EQ(oracle::to_pattern(oracle::from_pattern(m, 5)), m);
}

TEST(Oracle, ProbabilitiesSumToOne)
{
  const auto d = random_data(30, 7, 2);
  const auto t = oracle::enumerate_posterior(d, hyper(30.0));
  double total = 0;
  for (std::uint64_t m = 0; m < t.log_mass.size(); ++m) total += t.probability(m);
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (double q : t.inclusion) {
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(Oracle, InclusionDoesNotDependOnSpikePrecision)
{
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = random_data(50, 5, seed + 10, ModelKind::linear, 2, 0.4);
    const auto ref = oracle::enumerate_posterior(d, hyper(10.0));
    for (double rho0 : {1e3, 1e5}) {
      const auto t = oracle::enumerate_posterior(d, hyper(rho0));
      for (Index j = 0; j < 5; ++j) EXPECT_NEAR(t.inclusion[j], ref.inclusion[j], 1e-12);
    }
  }
}

TEST(Oracle, ThreadsDoNotChangeTheTable)
{
  const auto d = random_data(20, 8, 3);
  const auto a = oracle::enumerate_posterior(d, hyper(20.0), oracle::kEnumerationCap, 1);
  const auto b = oracle::enumerate_posterior(d, hyper(20.0), oracle::kEnumerationCap, 3);
  EXPECT_EQ(a.log_mass, b.log_mass);
  EXPECT_EQ(a.inclusion, b.inclusion);
}

TEST(Oracle, SingleCoordinateMatchesQuadrature)
{
  // p = 1: P(delta = 1) / P(delta = 0) = p^-u sqrt(rho1/(2 pi)) * integral exp(-rho1 t^2/2 + l(t) - l(0)) dt
  const auto d = random_data(10, 1, 4, ModelKind::linear, 1, 0.5);
  const auto h = hyper(10.0);
  auto loglik = [&](double t) { return -0.5 * (d.y - t * d.X.col(0)).squaredNorm(); };
  const double l0 = loglik(0.0);
  double integral = 0;
  const double lo = -10, hi = 10, step = 1e-4;
  for (double t = lo; t <= hi; t += step) integral += std::exp(-0.5 * h.rho1 * t * t + loglik(t) - l0) * step;
  const double odds = std::sqrt(h.rho1 / (2 * std::numbers::pi)) * integral;
  const double expect = odds / (1 + odds);
  const auto t = oracle::enumerate_posterior(d, h);
  EXPECT_NEAR(t.inclusion[0], expect, 1e-6);
}

TEST(Oracle, RejectsLargeP)
{
  const auto d = random_data(5, 21, 5);
  EXPECT_THROW(oracle::enumerate_posterior(d, hyper(5.0)), std::invalid_argument);
  const auto small = random_data(5, 6, 5);
  EXPECT_THROW(oracle::enumerate_posterior(small, hyper(5.0), 5), std::invalid_argument);
}

TEST(Oracle, TableDump)
{
  const auto d = random_data(8, 2, 6);
  const auto t = oracle::enumerate_posterior(d, hyper(8.0));
  std::ostringstream out;
  oracle::write_table_csv(out, t);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
  EXPECT_EQ(s.rfind("pattern,delta,log_mass,probability", 0), 0u);
}
