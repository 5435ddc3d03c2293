#pragma once

#include "types.hpp"

#include <cmath>
#include <concepts>
#include <span>

namespace spikeslab {

/// log(1 + e^m) without overflow.
inline double softplus(double m) noexcept
{
  return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

inline double sigmoid(double m) noexcept
{
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

/// Gaussian noise with known variance: l_i(m) = -(y_i - m)^2 / (2 sigma^2).
struct GaussianFamily
{
  static constexpr ModelKind kind = ModelKind::linear;
  double sigma2 = 1.0;

  double term(double y, double m) const noexcept
  {
    const double r = y - m;
    return -0.5 * r * r / sigma2;
  }
  double dterm(double y, double m) const noexcept { return (y - m) / sigma2; }
};

/// Bernoulli response with logistic link: l_i(m) = y m - log(1 + e^m).
struct LogisticFamily
{
  static constexpr ModelKind kind = ModelKind::logistic;

  double term(double y, double m) const noexcept { return y * m - softplus(m); }
  double dterm(double y, double m) const noexcept { return y - sigmoid(m); }
};

/**
 * Generalized linear likelihood l(theta_delta) = sum_i term(y_i, <x_i, theta_delta>).
 *
 * Every evaluation touches only the support columns of X, so the linear
 * predictor costs O(n |delta|_0). Holds a reference to the data; the data
 * must outlive the model.
 */
template <typename Family>
class GlmModel
{
public:
  using family_type = Family;

  explicit GlmModel(const RegressionData& data) requires std::same_as<Family, LogisticFamily>
    : data_(&data)
  {}
  explicit GlmModel(const RegressionData& data) requires std::same_as<Family, GaussianFamily>
    : data_(&data), family_{data.sigma2}
  {}

  static constexpr ModelKind kind() noexcept { return Family::kind; }
  const RegressionData& data() const noexcept { return *data_; }
  const Family& family() const noexcept { return family_; }
  Index n() const noexcept { return data_->n(); }
  Index p() const noexcept { return data_->p(); }

  /// X_delta [theta]_delta.
  Vector margins(const ParamVector& theta, const SparsityVector& delta) const
  {
    Vector m = Vector::Zero(data_->X.rows());
    for (Index j : delta.support()) m.noalias() += theta[j] * data_->X.col(static_cast<Eigen::Index>(j));
    return m;
  }

  double loglik_from_margins(const Vector& m) const
  {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) s += family_.term(data_->y[i], m[i]);
    return s;
  }

  double loglik(const ParamVector& theta, const SparsityVector& delta) const
  {
    return loglik_from_margins(margins(theta, delta));
  }

  /// d l / d m_i for every sample.
  Vector residual(const Vector& m) const
  {
    Vector r(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) r[i] = family_.dterm(data_->y[i], m[i]);
    return r;
  }

  /// Partial derivatives of l at theta_delta for the requested coordinates.
  Vector grad(const ParamVector& theta, const SparsityVector& delta, std::span<const Index> coords) const
  {
    return grad_from_margins(margins(theta, delta), coords);
  }

  Vector grad_from_margins(const Vector& m, std::span<const Index> coords) const
  {
    const Vector r = residual(m);
    Vector g(static_cast<Eigen::Index>(coords.size()));
    for (Index k = 0; k < coords.size(); ++k) g[k] = data_->X.col(static_cast<Eigen::Index>(coords[k])).dot(r);
    return g;
  }

  /**
   * Minibatch estimate (n/B) d/dtheta_j sum_{i in batch} l_i at theta_delta.
   * Only the batch rows of the linear predictor are formed: O(B |delta|_0).
   */
  Vector minibatch_grad(const ParamVector& theta, const SparsityVector& delta, std::span<const Index> batch,
                        std::span<const Index> coords) const
  {
    const auto& X = data_->X;
    Vector r(static_cast<Eigen::Index>(batch.size()));
    for (Index b = 0; b < batch.size(); ++b) {
      const auto i = static_cast<Eigen::Index>(batch[b]);
      double m = 0.0;
      for (Index j : delta.support()) m += X(i, static_cast<Eigen::Index>(j)) * theta[j];
      r[b] = family_.dterm(data_->y[i], m);
    }
    const double scale = static_cast<double>(n()) / static_cast<double>(batch.size());
    Vector g(static_cast<Eigen::Index>(coords.size()));
    for (Index k = 0; k < coords.size(); ++k) {
      const auto j = static_cast<Eigen::Index>(coords[k]);
      double s = 0.0;
      for (Index b = 0; b < batch.size(); ++b) s += X(static_cast<Eigen::Index>(batch[b]), j) * r[b];
      g[k] = scale * s;
    }
    return g;
  }

  /**
   * l(theta_{delta(j,0)}) - l(theta_{delta(j,1)}) given the linear predictor
   * `base` = X theta_{delta(j,0)}.
   */
  double flip_difference(const Vector& base, Index j, double theta_j) const
  {
    const auto col = data_->X.col(static_cast<Eigen::Index>(j));
    double s = 0.0;
    for (Eigen::Index i = 0; i < base.size(); ++i) {
      const double y = data_->y[i];
      s += family_.term(y, base[i]) - family_.term(y, base[i] + theta_j * col[i]);
    }
    return s;
  }

private:
  const RegressionData* data_;
  Family family_{};
};

using LinearModel = GlmModel<GaussianFamily>;
using LogisticModel = GlmModel<LogisticFamily>;

template <typename M>
concept LikelihoodModel = requires(const M& m, const ParamVector& theta, const SparsityVector& delta,
                                   const Vector& v, std::span<const Index> idx, Index j, double t) {
  { m.n() } -> std::convertible_to<Index>;
  { m.p() } -> std::convertible_to<Index>;
  { m.kind() } -> std::convertible_to<ModelKind>;
  { m.data() } -> std::convertible_to<const RegressionData&>;
  { m.margins(theta, delta) } -> std::convertible_to<Vector>;
  { m.loglik(theta, delta) } -> std::convertible_to<double>;
  { m.loglik_from_margins(v) } -> std::convertible_to<double>;
  { m.grad(theta, delta, idx) } -> std::convertible_to<Vector>;
  { m.grad_from_margins(v, idx) } -> std::convertible_to<Vector>;
  { m.minibatch_grad(theta, delta, idx, idx) } -> std::convertible_to<Vector>;
  { m.flip_difference(v, j, t) } -> std::convertible_to<double>;
};

static_assert(LikelihoodModel<LinearModel>);
static_assert(LikelihoodModel<LogisticModel>);

} // namespace spikeslab
