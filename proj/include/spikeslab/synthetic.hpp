#pragma once

#include "likelihood.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace spikeslab {

/// Simulation design: AR(1) correlated Gaussian rows and a sparse banded signal.
struct SyntheticSpec
{
  Index n = 500;
  Index p = 1000;
  double varrho = 0.0;          // corr(x_j, x_{j+1})
  Index s_star = 10;
  double signal_low = 6.0;
  double signal_high = 7.0;
  ModelKind model = ModelKind::linear;
  double sigma = 1.0;           // noise standard deviation (linear)
  bool normalize_columns = false;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (n < 1 || p < 1) throw std::invalid_argument("synthetic spec: n and p must be positive");
    if (!(varrho >= 0.0 && varrho < 1.0)) throw std::invalid_argument("synthetic spec: varrho must lie in [0, 1)");
    if (s_star < 1 || s_star > p) throw std::invalid_argument("synthetic spec: s_star must lie in [1, p]");
    if (!(signal_low < signal_high)) throw std::invalid_argument("synthetic spec: need signal_low < signal_high");
    if (!(sigma >= 0.0)) throw std::invalid_argument("synthetic spec: sigma must be >= 0");
  }
};

struct TrueSignal
{
  ParamVector theta;
  SparsityVector delta;
};

/**
 * n x p design with rows i.i.d. N(0, Sigma), Sigma_ij = varrho^|i-j|, via
 * x_1 = z_1, x_j = varrho x_{j-1} + sqrt(1 - varrho^2) z_j.
 */
inline Matrix generate_design(const SyntheticSpec& spec, rng::Engine& engine)
{
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  const double innov = std::sqrt(1.0 - spec.varrho * spec.varrho);
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    double prev = engine.gaussian();
    X(i, 0) = prev;
    for (Eigen::Index j = 1; j < p; ++j) {
      prev = spec.varrho * prev + innov * engine.gaussian();
      X(i, j) = prev;
    }
  }
  if (spec.normalize_columns) {
    const double target = std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < p; ++j) {
      const double norm = X.col(j).norm();
      if (norm > 0.0) X.col(j) *= target / norm;
    }
  }
  return X;
}

inline TrueSignal generate_signal(const SyntheticSpec& spec, rng::Engine& engine)
{
  spec.validate();
  TrueSignal s{ParamVector::Zero(static_cast<Eigen::Index>(spec.p)), SparsityVector(spec.p)};
  for (Index j : rng::sample_without_replacement(engine, spec.p, spec.s_star)) {
    const double mag = spec.signal_low + (spec.signal_high - spec.signal_low) * engine.uniform();
    s.theta[static_cast<Eigen::Index>(j)] = engine.uniform() < 0.5 ? -mag : mag;
    s.delta.set(j, true);
  }
  return s;
}

/// Linear: y = X theta + sigma z. Logistic: y_i ~ Ber(sigmoid(x_i' theta)).
inline Vector generate_response(const SyntheticSpec& spec, const Matrix& X, const ParamVector& theta_star,
                                rng::Engine& engine)
{
  if (X.cols() != theta_star.size()) throw std::invalid_argument("generate_response: dimension mismatch");
  const Vector m = X * theta_star;
  Vector y(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (spec.model == ModelKind::linear)
      y[i] = m[i] + spec.sigma * engine.gaussian();
    else
      y[i] = engine.uniform() < sigmoid(m[i]) ? 1.0 : 0.0;
  }
  return y;
}

/// Design and response drawn from separate substreams of `stream`.
inline RegressionData generate_dataset(const SyntheticSpec& spec, const ParamVector& theta_star,
                                       const rng::Stream& stream)
{
  rng::Engine design_engine(stream.child("design"));
  rng::Engine response_engine(stream.child("response"));
  RegressionData d;
  d.X = generate_design(spec, design_engine);
  d.y = generate_response(spec, d.X, theta_star, response_engine);
  d.sigma2 = spec.model == ModelKind::linear && spec.sigma > 0.0 ? spec.sigma * spec.sigma : 1.0;
  return d;
}

} // namespace spikeslab
