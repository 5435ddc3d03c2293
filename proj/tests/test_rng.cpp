#include "spikeslab/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace spikeslab;

TEST(Rng, SameSeedSameSequence)
{
  rng::Engine a(rng::Stream(42).child("x", 3));
  rng::Engine b(rng::Stream(42).child("x", 3));
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(a(), b());
}

TEST(Rng, ChildrenDiffer)
{
  const rng::Stream root(7);
  EXPECT_NE(root.child("a"), root.child("b"));
  EXPECT_NE(root.child("a", 0), root.child("a", 1));
  EXPECT_NE(root.child("a").child("b"), root.child("b").child("a"));
  EXPECT_NE(rng::Stream(1), rng::Stream(2));
}

TEST(Rng, SubstreamFollowsPath)
{
  rng::StreamKey key{{{"chain", 2}, {"iter", 5}}};
  EXPECT_EQ(rng::substream(9, key), rng::Stream(9).child("chain", 2).child("iter", 5));
}

TEST(Rng, IndexedDrawsAreStable)
{
  const rng::Stream s(3);
  EXPECT_EQ(s.uniform_at(17), s.uniform_at(17));
  EXPECT_NE(s.uniform_at(17), s.uniform_at(18));
  EXPECT_EQ(s.gaussian_at(4), rng::Stream(3).gaussian_at(4));
}

TEST(Rng, UniformMoments)
{
  rng::Engine e(rng::Stream(1));
  const int n = 200000;
  double s = 0, s2 = 0, lo = 1, hi = 0;
  for (int k = 0; k < n; ++k) {
    const double u = e.uniform();
    s += u;
    s2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 0.002);
}

TEST(Rng, GaussianMomentsAndTail)
{
  rng::Engine e(rng::Stream(2));
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  int beyond2 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = e.gaussian();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
    beyond2 += std::abs(z) > 2.0;
  }
  EXPECT_NEAR(s / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
  const double p2 = 0.04550026;
  EXPECT_NEAR(static_cast<double>(beyond2) / n, p2, 4 * std::sqrt(p2 * (1 - p2) / n));
}

TEST(Rng, IndexedGaussiansLookNormal)
{
  const rng::Stream s(11);
  const int n = 100000;
  double m = 0, v = 0;
  for (int k = 0; k < n; ++k) {
    const double z = s.gaussian_at(k);
    m += z;
    v += z * z;
  }
  EXPECT_NEAR(m / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(v / n, 1.0, 0.02);
}

TEST(Rng, BelowIsUniform)
{
  rng::Engine e(rng::Stream(5));
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int k = 0; k < n; ++k) {
    const auto v = e.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile, 6 dof
}

TEST(Rng, SampleWithoutReplacement)
{
  rng::Engine e(rng::Stream(8));
  std::vector<int> hits(10, 0);
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto s = rng::sample_without_replacement(e, 10, 3);
    ASSERT_EQ(s.size(), 3u);
    std::set<std::size_t> uniq(s.begin(), s.end());
    ASSERT_EQ(uniq.size(), 3u);
    for (auto j : s) {
      ASSERT_LT(j, 10u);
      ++hits[j];
    }
  }
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(reps), 0.3, 4 * std::sqrt(0.3 * 0.7 / reps));
  EXPECT_EQ(rng::sample_without_replacement(e, 5, 5).size(), 5u);
  EXPECT_TRUE(rng::sample_without_replacement(e, 5, 0).empty());
}

TEST(Rng, StandardDraws)
{
  rng::Engine a(rng::Stream(4)), b(rng::Stream(4));
  const auto u = rng::standard_draws(a, rng::DrawKind::uniform, 5);
  for (double v : u) EXPECT_EQ(v, b.uniform());
  EXPECT_EQ(rng::standard_draws(a, rng::DrawKind::gaussian, 3).size(), 3u);
}
