#pragma once

#include "spikeslab/rng.hpp"
#include "spikeslab/synthetic.hpp"
#include "spikeslab/types.hpp"

#include <cmath>

namespace testutil {

using namespace spikeslab;

/// Small random regression problem with a dense signal on the first `s` coordinates.
inline RegressionData random_data(Index n, Index p, std::uint64_t seed, ModelKind kind = ModelKind::linear,
                                  Index s = 2, double magnitude = 1.0)
{
  rng::Engine e(rng::Stream(seed).child("testdata"));
  RegressionData d;
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    for (Eigen::Index j = 0; j < d.X.cols(); ++j) d.X(i, j) = e.gaussian();
  ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(p));
  for (Index j = 0; j < std::min(s, p); ++j) theta[static_cast<Eigen::Index>(j)] = (j % 2 ? -1.0 : 1.0) * magnitude;
  const Vector m = d.X * theta;
  d.y.resize(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i)
    d.y[i] = kind == ModelKind::linear ? m[i] + e.gaussian() : (e.uniform() < sigmoid(m[i]) ? 1.0 : 0.0);
  d.sigma2 = 1.0;
  return d;
}

inline ParamVector random_theta(Index p, std::uint64_t seed, double scale = 0.5)
{
  rng::Engine e(rng::Stream(seed).child("theta"));
  ParamVector t(static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < t.size(); ++j) t[j] = scale * e.gaussian();
  return t;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace testutil
