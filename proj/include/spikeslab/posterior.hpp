#pragma once

#include "likelihood.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace spikeslab {

/// Bound on the argument of exp(); beyond it q is 0 or 1 at double precision.
inline constexpr double kExponentClamp = 700.0;

/// (1 + e^x)^{-1} with the exponent clamped to +-700.
inline double inclusion_from_exponent(double x) noexcept
{
  if (std::isnan(x)) return 0.5;
  x = std::clamp(x, -kExponentClamp, kExponentClamp);
  return 1.0 / (1.0 + std::exp(x));
}

/// a = u log p + 1/2 log(rho0 / rho1).
inline double penalty_const_a(const Hyperparams& h, Index p)
{
  return h.u * std::log(static_cast<double>(p)) + 0.5 * std::log(h.rho0 / h.rho1);
}

/**
 * Unnormalized log posterior of (delta, theta):
 * |delta|_0 log(p^-u sqrt(rho1/rho0)) - rho0/2 |theta - theta_delta|^2
 * - rho1/2 |theta_delta|^2 + l(theta_delta).
 */
template <LikelihoodModel M>
double log_posterior_unnorm(const SparsityVector& delta, const ParamVector& theta, const M& model,
                            const Hyperparams& h)
{
  const Index p = delta.size();
  if (static_cast<Index>(theta.size()) != p || model.p() != p)
    throw std::invalid_argument("log_posterior_unnorm: dimension mismatch");
  const double log_prior_weight =
    -h.u * std::log(static_cast<double>(p)) + 0.5 * std::log(h.rho1 / h.rho0);
  double spike = 0.0, slab = 0.0;
  for (Index j = 0; j < p; ++j) {
    const double t2 = theta[j] * theta[j];
    (delta[j] ? slab : spike) += t2;
  }
  return static_cast<double>(delta.count()) * log_prior_weight - 0.5 * h.rho0 * spike - 0.5 * h.rho1 * slab +
         model.loglik(theta, delta);
}

/// Exponent of the exact conditional q_j given the likelihood difference l(.,j=0) - l(.,j=1).
inline double exact_exponent(double a, const Hyperparams& h, double theta_j, double loglik_diff) noexcept
{
  return a + 0.5 * (h.rho1 - h.rho0) * theta_j * theta_j + loglik_diff;
}

/// Exact full conditional P(delta_j = 1 | delta_-j, theta). Never reads delta_j.
template <LikelihoodModel M>
double exact_inclusion_prob(const SparsityVector& delta, const ParamVector& theta, Index j, const M& model,
                            const Hyperparams& h)
{
  if (j >= delta.size()) throw std::out_of_range("exact_inclusion_prob: coordinate out of range");
  Vector base = model.margins(theta, delta);
  if (delta[j]) base.noalias() -= theta[j] * model.data().X.col(static_cast<Eigen::Index>(j));
  const double diff = model.flip_difference(base, j, theta[j]);
  return inclusion_from_exponent(exact_exponent(penalty_const_a(h, delta.size()), h, theta[j], diff));
}

/// Gradient-based approximation with the sign of the quadratic term reverted.
inline double approx_exponent(double a, const Hyperparams& h, double theta_j, double g) noexcept
{
  return a + 0.5 * (h.rho1 - h.rho0) * theta_j * theta_j - theta_j * g - 0.5 * theta_j * theta_j * g * g;
}

inline double approx_inclusion_prob(double grad_j, double theta_j, const Hyperparams& h, Index p)
{
  return inclusion_from_exponent(approx_exponent(penalty_const_a(h, p), h, theta_j, grad_j));
}

/// Same formula with a minibatch gradient already rescaled by n/B.
inline double minibatch_inclusion_prob(double ghat_j, double theta_j, const Hyperparams& h, Index p)
{
  return approx_inclusion_prob(ghat_j, theta_j, h, p);
}

/**
 * Penalized log-likelihood at the masked parameter,
 * l(theta_delta) - rho1/2 |theta_delta|^2, typically evaluated on held-out data.
 */
template <LikelihoodModel M>
double penalized_test_loglik(const M& test_model, const SparsityVector& delta, const ParamVector& theta,
                             const Hyperparams& h)
{
  double slab = 0.0;
  for (Index j : delta.support()) slab += theta[j] * theta[j];
  return test_model.loglik(theta, delta) - 0.5 * h.rho1 * slab;
}

/// delta with every coordinate of `selection` zeroed.
inline SparsityVector screening_mask(std::span<const Index> selection, const SparsityVector& delta)
{
  SparsityVector masked_delta = delta;
  for (Index j : selection) {
    if (j >= delta.size()) throw std::out_of_range("screening_mask: index out of range");
    masked_delta.set(j, false);
  }
  return masked_delta;
}

} // namespace spikeslab
