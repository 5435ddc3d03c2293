#pragma once

#include "likelihood.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace spikeslab {

struct LassoResult
{
  ParamVector theta;
  SparsityVector support;
  Index iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;   // max subgradient violation at theta
  std::string warning;         // set when max_iters was hit
};

inline double soft_threshold(double x, double t) noexcept
{
  return x > t ? x - t : (x < -t ? x + t : 0.0);
}

/// sqrt(2 log p / n) times the sample standard deviation of y.
inline double default_lasso_lambda(const RegressionData& data, double scale = 1.0)
{
  const double n = static_cast<double>(data.n());
  const double mean = data.y.mean();
  const double sd = std::sqrt((data.y.array() - mean).square().sum() / std::max(1.0, n - 1.0));
  return scale * (sd > 0.0 ? sd : 1.0) * std::sqrt(2.0 * std::log(static_cast<double>(data.p())) / n);
}

namespace detail {

/// Largest eigenvalue of X'X by power iteration.
inline double gram_spectral_norm(const Matrix& X, int iters = 100)
{
  Vector v = Vector::Ones(X.cols()) / std::sqrt(static_cast<double>(X.cols()));
  double lam = 0.0;
  for (int k = 0; k < iters; ++k) {
    const Vector w = X.transpose() * (X * v);
    const double norm = w.norm();
    if (!(norm > 0.0)) return 0.0;
    if (std::abs(norm - lam) <= 1e-10 * norm) return norm;
    lam = norm;
    v = w / norm;
  }
  return lam;
}

inline double kkt_violation(const ParamVector& theta, const Vector& grad_f, double lambda)
{
  double worst = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double g = grad_f[j];
    const double r = theta[j] != 0.0 ? std::abs(g + lambda * (theta[j] > 0.0 ? 1.0 : -1.0))
                                     : std::max(0.0, std::abs(g) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

} // namespace detail

/**
 * ISTA with backtracking for -l(theta)/n + lambda |theta|_1, started at 0.
 * Stops when the relative change or the KKT residual falls below tol.
 */
template <LikelihoodModel M>
LassoResult lasso_warm_start(const M& model, double lambda, Index max_iters = 5000, double tol = 1e-8)
{
  const Index p = model.p();
  const double n = static_cast<double>(model.n());
  const auto& X = model.data().X;
  const SparsityVector all = SparsityVector::full(p);
  std::vector<Index> coords(p);
  std::iota(coords.begin(), coords.end(), Index{0});

  auto objective_smooth = [&](const ParamVector& th) { return -model.loglik(th, all) / n; };
  auto gradient = [&](const ParamVector& th) -> Vector { return -model.grad(th, all, coords) / n; };

  const double curvature = model.kind() == ModelKind::linear ? 1.0 / model.data().sigma2 : 0.25;
  double step = 1.0 / std::max(1e-12, curvature * detail::gram_spectral_norm(X) / n);

  LassoResult res;
  ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(p));
  double f = objective_smooth(theta);
  Vector g = gradient(theta);

  for (res.iterations = 0; res.iterations < max_iters;) {
    ParamVector next(theta.size());
    double f_next = 0.0;
    while (true) {
      for (Eigen::Index j = 0; j < theta.size(); ++j) next[j] = soft_threshold(theta[j] - step * g[j], step * lambda);
      const Vector d = next - theta;
      f_next = objective_smooth(next);
      if (f_next <= f + g.dot(d) + 0.5 * d.squaredNorm() / step + 1e-15 * std::abs(f) || step < 1e-300) break;
      step *= 0.5;
    }
    ++res.iterations;
    const double change = (next - theta).norm() / std::max(1.0, theta.norm());
    theta = std::move(next);
    f = f_next;
    g = gradient(theta);
    res.kkt_residual = detail::kkt_violation(theta, g, lambda);
    if (change <= tol || res.kkt_residual <= tol) {
      res.converged = true;
      break;
    }
  }
  if (res.iterations == 0) res.kkt_residual = detail::kkt_violation(theta, g, lambda);
  if (!res.converged && max_iters > 0)
    res.warning = "lasso did not converge in " + std::to_string(max_iters) + " iterations";
  res.support = SparsityVector(p);
  for (Index j = 0; j < p; ++j)
    if (theta[static_cast<Eigen::Index>(j)] != 0.0) res.support.set(j, true);
  res.theta = std::move(theta);
  return res;
}

} // namespace spikeslab
