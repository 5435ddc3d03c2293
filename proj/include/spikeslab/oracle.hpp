#pragma once

#include "io.hpp"
#include "types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace spikeslab {
namespace oracle {

inline constexpr Index kEnumerationCap = 20;

namespace detail {

inline Matrix active_columns(const RegressionData& data, const std::vector<Index>& support)
{
  Matrix Xd(data.X.rows(), static_cast<Eigen::Index>(support.size()));
  for (Index k = 0; k < support.size(); ++k)
    Xd.col(static_cast<Eigen::Index>(k)) = data.X.col(static_cast<Eigen::Index>(support[k]));
  return Xd;
}

/**
 * log of the delta-dependent prior factor times the theta integrals of the
 * spike coordinates, relative to delta = 0:
 * s log(p^-u sqrt(rho1/rho0)) + s/2 log(2 pi/rho1) - s/2 log(2 pi/rho0).
 * Algebraically rho0-free; kept term by term so rho0 invariance is observable.
 */
inline double log_prior_terms(Index s, Index p, double u, double rho0, double rho1)
{
  const double sd = static_cast<double>(s);
  const double two_pi = 2.0 * std::numbers::pi;
  return sd * (-u * std::log(static_cast<double>(p)) + 0.5 * std::log(rho1 / rho0)) +
         0.5 * sd * std::log(two_pi / rho1) - 0.5 * sd * std::log(two_pi / rho0);
}

} // namespace detail

/**
 * log[pi(delta) * integral of the likelihood over [theta]_delta] up to a
 * delta-independent constant, through the s x s matrix
 * M = I_s + X_d'X_d / (rho1 sigma2): log det L = log det M and
 * y'L^{-1}y = y'y - y'X_d M^{-1} X_d'y / (rho1 sigma2).
 */
inline double log_marginal_delta(const RegressionData& data, const SparsityVector& delta, const Hyperparams& h)
{
  const double c = 1.0 / (h.rho1 * data.sigma2);
  const double yy = data.y.squaredNorm();
  double quad = yy, logdet = 0.0;
  if (delta.count() > 0) {
    const Matrix Xd = detail::active_columns(data, delta.support());
    const auto s = Xd.cols();
    Matrix M = Matrix::Identity(s, s);
    M.selfadjointView<Eigen::Lower>().rankUpdate(Xd.transpose(), c);
    Eigen::LLT<Matrix> llt(M.selfadjointView<Eigen::Lower>());
    const Vector xty = Xd.transpose() * data.y;
    quad = yy - c * xty.dot(llt.solve(xty));
    logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  return detail::log_prior_terms(delta.count(), delta.size(), h.u, h.rho0, h.rho1) - 0.5 * quad / data.sigma2 -
         0.5 * logdet;
}

/// Same quantity through the n x n matrix L = I_n + X_d X_d' / (rho1 sigma2).
inline double log_marginal_delta_direct(const RegressionData& data, const SparsityVector& delta,
                                        const Hyperparams& h)
{
  const auto n = data.X.rows();
  Matrix L = Matrix::Identity(n, n);
  if (delta.count() > 0) {
    const Matrix Xd = detail::active_columns(data, delta.support());
    L.noalias() += (Xd * Xd.transpose()) / (h.rho1 * data.sigma2);
  }
  Eigen::LLT<Matrix> llt(L);
  const double quad = data.y.dot(llt.solve(data.y));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return detail::log_prior_terms(delta.count(), delta.size(), h.u, h.rho0, h.rho1) - 0.5 * quad / data.sigma2 -
         0.5 * logdet;
}

struct ModelPosteriorTable
{
  Index p = 0;
  std::vector<double> log_mass;     // indexed by bit pattern (bit j = coordinate j), unnormalized
  double log_normalizer = 0.0;
  std::vector<double> inclusion;    // P(delta_j = 1 | data)

  double probability(std::uint64_t pattern) const { return std::exp(log_mass[pattern] - log_normalizer); }
};

inline SparsityVector from_pattern(std::uint64_t pattern, Index p)
{
  SparsityVector d(p);
  for (Index j = 0; j < p; ++j)
    if ((pattern >> j) & 1u) d.set(j, true);
  return d;
}

inline std::uint64_t to_pattern(const SparsityVector& d)
{
  std::uint64_t pattern = 0;
  for (Index j : d.support()) pattern |= std::uint64_t{1} << j;
  return pattern;
}

/// Exact posterior over all 2^p models, normalized with a running-max log-sum-exp.
inline ModelPosteriorTable enumerate_posterior(const RegressionData& data, const Hyperparams& h,
                                               Index p_cap = kEnumerationCap, unsigned threads = 1)
{
  const Index p = data.p();
  if (p > p_cap || p > kEnumerationCap)
    throw std::invalid_argument("enumerate_posterior: p = " + std::to_string(p) + " exceeds the enumeration cap");
  const std::uint64_t models = std::uint64_t{1} << p;

  ModelPosteriorTable t;
  t.p = p;
  t.log_mass.resize(models);
  threads = std::max(1u, threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::uint64_t m = w; m < models; m += threads) t.log_mass[m] = log_marginal_delta(data, from_pattern(m, p), h);
      });
  }

  double mx = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double v : t.log_mass) {
    if (v > mx) {
      acc = acc * std::exp(mx - v) + 1.0;
      mx = v;
    } else {
      acc += std::exp(v - mx);
    }
  }
  t.log_normalizer = mx + std::log(acc);

  t.inclusion.assign(p, 0.0);
  for (std::uint64_t m = 0; m < models; ++m) {
    const double w = t.probability(m);
    for (Index j = 0; j < p; ++j)
      if ((m >> j) & 1u) t.inclusion[j] += w;
  }
  return t;
}

/// pattern,delta,log_mass,probability for every model (p <= 12).
inline void write_table_csv(std::ostream& out, const ModelPosteriorTable& t)
{
  if (t.p > 12) throw std::invalid_argument("model table dump is limited to p <= 12");
  io::CsvWriter w(out);
  w.header({"pattern", "delta", "log_mass", "probability"});
  for (std::uint64_t m = 0; m < t.log_mass.size(); ++m)
    w.row(m, from_pattern(m, t.p).to_string(), t.log_mass[m], t.probability(m));
}

} // namespace oracle
} // namespace spikeslab
