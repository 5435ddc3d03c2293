#pragma once

#include "likelihood.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace spikeslab {

enum class KernelKind { exact_gaussian, mala, sgld };

inline const char* to_string(KernelKind k)
{
  switch (k) {
  case KernelKind::exact_gaussian: return "exact_gaussian";
  case KernelKind::mala: return "mala";
  case KernelKind::sgld: return "sgld";
  }
  return "?";
}

/// Choice of the theta | delta kernel. Step sizes and batch size live in Hyperparams.
struct KernelConfig
{
  KernelKind kind = KernelKind::exact_gaussian;
  Index inner_steps = 1;
};

class NumericalDegeneracy : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/**
 * Gaussian conditional of [theta]_delta given delta for the linear model:
 * N(mean, sigma2 * A^{-1}) with A = X_d'X_d + rho1 sigma2 I and
 * mean = A^{-1} X_d'y.
 */
struct ConditionalGaussian
{
  Vector mean;
  Eigen::LLT<Matrix> gram;   // factorization of A
  double sigma2 = 1.0;

  Matrix covariance() const
  {
    const auto s = mean.size();
    return sigma2 * gram.solve(Matrix::Identity(s, s));
  }
};

inline ConditionalGaussian linear_conditional(const RegressionData& data, const std::vector<Index>& support,
                                              double rho1)
{
  const auto s = static_cast<Eigen::Index>(support.size());
  Matrix Xd(data.X.rows(), s);
  for (Eigen::Index k = 0; k < s; ++k) Xd.col(k) = data.X.col(static_cast<Eigen::Index>(support[k]));
  Matrix A = Matrix::Identity(s, s) * (rho1 * data.sigma2);
  A.selfadjointView<Eigen::Lower>().rankUpdate(Xd.transpose());
  ConditionalGaussian cg;
  cg.sigma2 = data.sigma2;
  cg.gram.compute(A.selfadjointView<Eigen::Lower>());
  if (cg.gram.info() != Eigen::Success) throw NumericalDegeneracy("conditional Gram matrix is not positive definite");
  cg.mean = cg.gram.solve(Xd.transpose() * data.y);
  return cg;
}

/// One draw of [theta]_delta from its exact Gaussian conditional (linear model only).
inline Vector exact_conditional_draw(const RegressionData& data, const SparsityVector& delta, double rho1,
                                     rng::Engine& engine)
{
  if (delta.count() == 0) throw std::invalid_argument("exact_conditional_draw: empty support");
  const ConditionalGaussian cg = linear_conditional(data, delta.support(), rho1);
  Vector z(cg.mean.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = engine.gaussian();
  // A = L L'  =>  L^{-T} z has covariance A^{-1}
  const Vector w = cg.gram.matrixU().solve(z);
  return cg.mean + std::sqrt(data.sigma2) * w;
}

namespace detail {

struct LangevinEval
{
  double log_density;
  Vector grad;
};

/// log of exp(-rho1/2 |u|^2 + l((u,0)_delta)) and its gradient in u.
template <LikelihoodModel M>
LangevinEval conditional_log_density(const M& model, const std::vector<Index>& support, const Vector& u,
                                     double rho1)
{
  const auto& X = model.data().X;
  Vector m = Vector::Zero(X.rows());
  for (Index k = 0; k < support.size(); ++k)
    m.noalias() += u[static_cast<Eigen::Index>(k)] * X.col(static_cast<Eigen::Index>(support[k]));
  LangevinEval e;
  e.log_density = -0.5 * rho1 * u.squaredNorm() + model.loglik_from_margins(m);
  e.grad = model.grad_from_margins(m, support) - rho1 * u;
  return e;
}

} // namespace detail

struct MalaResult
{
  Vector state;
  bool accepted = false;
};

/**
 * One Metropolis-adjusted Langevin transition on [theta]_delta targeting
 * exp(-rho1/2 |u|^2 + l((u,0)_delta)). A non-finite proposal is rejected.
 */
template <LikelihoodModel M>
MalaResult mala_step(const M& model, const SparsityVector& delta, const Vector& current, const Hyperparams& h,
                     double step, rng::Engine& engine)
{
  if (delta.count() == 0) throw std::invalid_argument("mala_step: empty support");
  const auto& support = delta.support();
  const auto here = detail::conditional_log_density(model, support, current, h.rho1);

  Vector z(current.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = engine.gaussian();
  const Vector proposal = current + step * here.grad + std::sqrt(2.0 * step) * z;
  const auto there = detail::conditional_log_density(model, support, proposal, h.rho1);

  const double log_u = std::log(engine.uniform());
  if (!std::isfinite(there.log_density) || !there.grad.allFinite()) return {current, false};

  const double fwd = (proposal - current - step * here.grad).squaredNorm();
  const double rev = (current - proposal - step * there.grad).squaredNorm();
  const double log_alpha = there.log_density - here.log_density - (rev - fwd) / (4.0 * step);
  if (log_u < log_alpha) return {proposal, true};
  return {current, false};
}

/**
 * Deterministic part of the SGLD update given a minibatch and a noise vector:
 * u + gamma (-rho1 u + G_hat) + sqrt(2 gamma) z.
 */
template <LikelihoodModel M>
Vector sgld_update(const M& model, const SparsityVector& delta, const Vector& current, const Hyperparams& h,
                   std::span<const Index> batch, const Vector& noise)
{
  const auto& support = delta.support();
  ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(delta.size()));
  scatter(theta, support, current);
  const Vector g = model.minibatch_grad(theta, delta, batch, support);
  return current + h.gamma * (g - h.rho1 * current) + std::sqrt(2.0 * h.gamma) * noise;
}

/// Unadjusted Langevin step with a fresh minibatch of size B (without replacement).
template <LikelihoodModel M>
Vector sgld_step(const M& model, const SparsityVector& delta, const Vector& current, const Hyperparams& h,
                 rng::Engine& noise_engine, rng::Engine& batch_engine)
{
  if (delta.count() == 0) throw std::invalid_argument("sgld_step: empty support");
  if (!h.B) throw std::invalid_argument("sgld_step: batch size B is required");
  const auto batch = rng::sample_without_replacement(batch_engine, model.n(), *h.B);
  Vector z(current.size());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = noise_engine.gaussian();
  return sgld_update(model, delta, current, h, batch, z);
}

/// Replaces every inactive coordinate by an independent N(0, 1/rho0) draw keyed by coordinate.
inline void refresh_inactive(ParamVector& theta, const SparsityVector& delta, const Hyperparams& h,
                             const rng::Stream& stream)
{
  const double sd = 1.0 / std::sqrt(h.rho0);
  for (Index j = 0; j < delta.size(); ++j)
    if (!delta[j]) theta[j] = sd * stream.gaussian_at(j);
}

} // namespace spikeslab
