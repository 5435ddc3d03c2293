#pragma once

#include "io.hpp"
#include "kernels.hpp"
#include "likelihood.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace spikeslab {
namespace coupling {

/// Shared-uniform coupling of Ber(p1) and Ber(p2); disagrees with probability |p1 - p2|.
inline std::pair<bool, bool> bernoulli_maximal_coupling(double p1, double p2, rng::Engine& engine)
{
  const double u = engine.uniform();
  return {u < p1, u < p2};
}

/// Multivariate normal with a Cholesky factor of its covariance.
class MvNormal
{
public:
  MvNormal(Vector mean, const Matrix& cov) : mean_(std::move(mean))
  {
    if (cov.rows() != mean_.size() || cov.cols() != mean_.size())
      throw std::invalid_argument("MvNormal: covariance shape does not match mean");
    const Matrix sym = 0.5 * (cov + cov.transpose());
    llt_.compute(sym);
    if (llt_.info() != Eigen::Success || !(llt_.matrixLLT().diagonal().array() > 0.0).all())
      throw std::invalid_argument("MvNormal: covariance is not positive definite");
    log_norm_ = -llt_.matrixLLT().diagonal().array().log().sum() -
                0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi);
  }

  static MvNormal isotropic(Eigen::Index dim, double variance)
  {
    return MvNormal(Vector::Zero(dim), Matrix::Identity(dim, dim) * variance);
  }

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }

  Vector sample(rng::Engine& engine) const
  {
    Vector z(dim());
    for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = engine.gaussian();
    return mean_ + llt_.matrixL() * z;
  }

  double log_pdf(const Vector& x) const
  {
    const Vector w = llt_.matrixL().solve(x - mean_);
    return log_norm_ - 0.5 * w.squaredNorm();
  }

private:
  Vector mean_;
  Eigen::LLT<Matrix> llt_;
  double log_norm_ = 0.0;
};

struct CoupledDraw
{
  Vector first, second;
  bool equal = false;
};

/**
 * Rejection-based maximal coupling: propose x from the first law, keep it
 * for both with probability min(1, q(x)/p(x)); otherwise draw the second
 * coordinate from the part of q not covered by p.
 */
inline CoupledDraw gaussian_maximal_coupling(const MvNormal& first, const MvNormal& second, rng::Engine& engine)
{
  if (first.dim() != second.dim()) throw std::invalid_argument("gaussian_maximal_coupling: dimension mismatch");
  CoupledDraw out;
  out.first = first.sample(engine);
  if (std::log(engine.uniform()) + first.log_pdf(out.first) <= second.log_pdf(out.first)) {
    out.second = out.first;
    out.equal = true;
    return out;
  }
  while (true) {
    Vector y = second.sample(engine);
    if (std::log(engine.uniform()) + second.log_pdf(y) > first.log_pdf(y)) {
      out.second = std::move(y);
      return out;
    }
  }
}

inline CoupledDraw gaussian_maximal_coupling(const Vector& mean1, const Matrix& cov1, const Vector& mean2,
                                             const Matrix& cov2, rng::Engine& engine)
{
  return gaussian_maximal_coupling(MvNormal(mean1, cov1), MvNormal(mean2, cov2), engine);
}

namespace detail {

inline Vector take(const Vector& v, const std::vector<Eigen::Index>& idx)
{
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[idx[k]];
  return out;
}

inline Matrix take(const Matrix& m, const std::vector<Eigen::Index>& rows, const std::vector<Eigen::Index>& cols)
{
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(rows[r], cols[c]);
  return out;
}

/// Law of the `target` block of N(mean, cov) given the `given` block equals `value`.
inline MvNormal conditional_block(const Vector& mean, const Matrix& cov, const std::vector<Eigen::Index>& target,
                                  const std::vector<Eigen::Index>& given, const Vector& value)
{
  Vector mu = take(mean, target);
  Matrix S = take(cov, target, target);
  if (!given.empty()) {
    const Matrix Sgg = take(cov, given, given);
    const Matrix Stg = take(cov, target, given);
    Eigen::LLT<Matrix> llt(Sgg);
    mu += Stg * llt.solve(value - take(mean, given));
    S -= Stg * llt.solve(Stg.transpose());
  }
  return MvNormal(mu, S);
}

/// Positions inside `support` of the coordinates in `coords` (both sorted).
inline std::vector<Eigen::Index> positions(const std::vector<Index>& support, const std::vector<Index>& coords)
{
  std::vector<Eigen::Index> out;
  out.reserve(coords.size());
  for (Index j : coords)
    out.push_back(static_cast<Eigen::Index>(std::lower_bound(support.begin(), support.end(), j) - support.begin()));
  return out;
}

} // namespace detail

struct CouplingOptions
{
  /// Couple the spike/slab blocks (G_01, G_10) one coordinate at a time
  /// instead of as one joint Gaussian.
  bool coordinatewise_spike_blocks = false;
};

struct CoupledStep
{
  ChainState first, second;
  bool met = false;
};

namespace detail {

/**
 * Couples one slab block (chain A's conditional given its G_11 value) with
 * the N(0, I/rho0) spike law of chain B. Writes into theta_slab / theta_spike.
 */
inline void couple_spike_block(const ConditionalGaussian& cg, const std::vector<Index>& slab_support,
                               const std::vector<Index>& shared, const Vector& shared_value,
                               const std::vector<Index>& block, double rho0, bool coordinatewise,
                               ParamVector& theta_slab, ParamVector& theta_spike, rng::Engine& engine)
{
  if (block.empty()) return;
  const Matrix cov = cg.covariance();
  const auto given_pos = positions(slab_support, shared);
  const auto block_pos = positions(slab_support, block);
  if (!coordinatewise) {
    const MvNormal slab = conditional_block(cg.mean, cov, block_pos, given_pos, shared_value);
    const MvNormal spike = MvNormal::isotropic(slab.dim(), 1.0 / rho0);
    const auto d = gaussian_maximal_coupling(slab, spike, engine);
    for (std::size_t k = 0; k < block.size(); ++k) {
      theta_slab[block[k]] = d.first[static_cast<Eigen::Index>(k)];
      theta_spike[block[k]] = d.second[static_cast<Eigen::Index>(k)];
    }
    return;
  }
  std::vector<Eigen::Index> given = given_pos;
  Vector value = shared_value;
  const MvNormal spike = MvNormal::isotropic(1, 1.0 / rho0);
  for (std::size_t k = 0; k < block.size(); ++k) {
    const MvNormal slab = conditional_block(cg.mean, cov, {block_pos[k]}, given, value);
    const auto d = gaussian_maximal_coupling(slab, spike, engine);
    theta_slab[block[k]] = d.first[0];
    theta_spike[block[k]] = d.second[0];
    given.push_back(block_pos[k]);
    value.conservativeResize(value.size() + 1);
    value[value.size() - 1] = d.first[0];
  }
}

} // namespace detail

/**
 * One step of the coupled exact sampler for the linear model. Both chains
 * share the refresh normals, the selected subset and the uniforms of the
 * delta sweep; the active theta blocks are maximally coupled group by group
 * (G_11 jointly, then G_10 and G_01 conditionally on it). Each chain alone
 * follows exact_step's law.
 */
template <LikelihoodModel M>
CoupledStep coupled_exact_step(const ChainState& s1, const ChainState& s2, const M& model, const Hyperparams& h,
                               const rng::Stream& iter_stream, const CouplingOptions& opts = {})
{
  if (model.kind() != ModelKind::linear) throw ConfigError("coupled chains require the linear model");
  const Index p = model.p();
  if (s1.delta.size() != p || s2.delta.size() != p) throw std::invalid_argument("coupled_exact_step: dimension mismatch");

  const IterationStreams streams(iter_stream);
  CoupledStep out;
  out.first.theta = s1.theta;
  out.second.theta = s2.theta;
  refresh_inactive(out.first.theta, s1.delta, h, streams.refresh);
  refresh_inactive(out.second.theta, s2.delta, h, streams.refresh);

  std::vector<Index> g11, g10, g01;
  for (Index j = 0; j < p; ++j) {
    const bool a = s1.delta[j], b = s2.delta[j];
    if (a && b) g11.push_back(j);
    else if (a) g10.push_back(j);
    else if (b) g01.push_back(j);
  }

  rng::Engine engine(streams.kernel);
  const auto& data = model.data();
  std::optional<ConditionalGaussian> cg1, cg2;
  if (s1.delta.count() > 0) cg1 = linear_conditional(data, s1.delta.support(), h.rho1);
  if (s2.delta.count() > 0) cg2 = linear_conditional(data, s2.delta.support(), h.rho1);

  Vector v1, v2;
  if (!g11.empty()) {
    const auto pos1 = detail::positions(s1.delta.support(), g11);
    const auto pos2 = detail::positions(s2.delta.support(), g11);
    const MvNormal n1 = detail::conditional_block(cg1->mean, cg1->covariance(), pos1, {}, Vector());
    const MvNormal n2 = detail::conditional_block(cg2->mean, cg2->covariance(), pos2, {}, Vector());
    const auto d = gaussian_maximal_coupling(n1, n2, engine);
    v1 = d.first;
    v2 = d.second;
    for (std::size_t k = 0; k < g11.size(); ++k) {
      out.first.theta[g11[k]] = v1[static_cast<Eigen::Index>(k)];
      out.second.theta[g11[k]] = v2[static_cast<Eigen::Index>(k)];
    }
  }
  if (!g10.empty())
    detail::couple_spike_block(*cg1, s1.delta.support(), g11, v1, g10, h.rho0, opts.coordinatewise_spike_blocks,
                               out.first.theta, out.second.theta, engine);
  if (!g01.empty())
    detail::couple_spike_block(*cg2, s2.delta.support(), g11, v2, g01, h.rho0, opts.coordinatewise_spike_blocks,
                               out.second.theta, out.first.theta, engine);

  out.first.delta = s1.delta;
  out.second.delta = s2.delta;
  const auto selection = spikeslab::detail::draw_selection(streams, p, h.J);
  exact_delta_sweep(out.first.delta, out.first.theta, model, h, selection, streams.bernoulli);
  exact_delta_sweep(out.second.delta, out.second.theta, model, h, selection, streams.bernoulli);
  out.first.iteration = s1.iteration + 1;
  out.second.iteration = s2.iteration + 1;
  out.met = out.first.delta == out.second.delta && out.first.theta == out.second.theta;
  return out;
}

struct CoupledTrace
{
  Index lag = 1;
  Index meeting_time = 0;   // tau^(L); equals max_iters when censored
  bool censored = false;
  Index max_iters = 0;
  std::uint64_t seed = 0;
};

struct MixingCurve
{
  std::vector<Index> t_grid;
  std::vector<double> bound;
  std::vector<double> stderr_;
  Index replications = 0;
};

struct MixingEstimate
{
  std::vector<CoupledTrace> replicas;
  MixingCurve curve;
  std::optional<Index> t_mix;   // smallest grid t with bound <= epsilon
  double epsilon = 0.25;
  Index censored = 0;
};

/// max(0, ceil((tau - L - t) / L)).
inline double tv_bound_term(Index tau, Index lag, Index t)
{
  const double x = (static_cast<double>(tau) - static_cast<double>(lag) - static_cast<double>(t)) /
                   static_cast<double>(lag);
  return std::max(0.0, std::ceil(x));
}

inline MixingCurve bound_curve(const std::vector<CoupledTrace>& replicas, std::vector<Index> t_grid)
{
  std::sort(t_grid.begin(), t_grid.end());
  MixingCurve c;
  c.t_grid = t_grid;
  c.replications = replicas.size();
  const double R = static_cast<double>(replicas.size());
  for (Index t : t_grid) {
    double s = 0.0, s2 = 0.0;
    for (const auto& r : replicas) {
      const double v = tv_bound_term(r.meeting_time, r.lag, t);
      s += v;
      s2 += v * v;
    }
    const double mean = R > 0 ? s / R : 0.0;
    const double var = R > 1 ? std::max(0.0, (s2 - R * mean * mean) / (R - 1.0)) : 0.0;
    c.bound.push_back(mean);
    c.stderr_.push_back(R > 0 ? std::sqrt(var / R) : 0.0);
  }
  return c;
}

inline std::optional<Index> mixing_time(const MixingCurve& c, double epsilon)
{
  for (std::size_t k = 0; k < c.t_grid.size(); ++k)
    if (c.bound[k] <= epsilon) return c.t_grid[k];
  return std::nullopt;
}

/**
 * One lag-L coupled run: X is advanced L steps alone, then (X, Y) move
 * jointly until they coincide. Returns tau = first k > L with X^(k) = Y^(k-L).
 */
template <LikelihoodModel M>
CoupledTrace coupled_run(const M& model, const Hyperparams& h, const SamplerConfig& cfg, Index lag, Index max_iters,
                         const rng::Stream& replica, const CouplingOptions& opts = {})
{
  if (lag < 1) throw std::invalid_argument("coupled_run: lag must be >= 1");
  CoupledTrace tr;
  tr.lag = lag;
  tr.max_iters = max_iters;
  ChainState x = initial_state(cfg, model, h, replica.child("x"));
  ChainState y = initial_state(cfg, model, h, replica.child("y"));
  const rng::Stream pre = replica.child("x_pre");
  for (Index k = 0; k < lag; ++k) x = exact_step(x, model, h, cfg, pre.child("iter", k));
  const rng::Stream joint = replica.child("coupled");
  for (Index t = 1; lag + t <= max_iters; ++t) {
    auto step = coupled_exact_step(x, y, model, h, joint.child("iter", t), opts);
    x = std::move(step.first);
    y = std::move(step.second);
    if (step.met) {
      tr.meeting_time = lag + t;
      return tr;
    }
  }
  tr.meeting_time = max_iters;
  tr.censored = true;
  return tr;
}

/**
 * Runs R independent lag-L coupled chains and averages
 * max(0, ceil((tau - L - t)/L)) over replicas for every t in the grid.
 */
template <LikelihoodModel M>
MixingEstimate estimate_mixing_bound(const M& model, const Hyperparams& h, const SamplerConfig& cfg, Index lag,
                                     Index replications, const std::vector<Index>& t_grid, Index max_iters,
                                     const rng::Stream& master, unsigned threads = 1, double epsilon = 0.25,
                                     const CouplingOptions& opts = {})
{
  if (lag < 1 || replications < 1) throw std::invalid_argument("estimate_mixing_bound: need L >= 1 and R >= 1");
  if (cfg.algorithm != Algorithm::exact || cfg.kernel.kind != KernelKind::exact_gaussian ||
      model.kind() != ModelKind::linear)
    throw ConfigError("mixing estimation supports only the exact sampler with the exact Gaussian kernel on linear data");
  MixingEstimate est;
  est.epsilon = epsilon;
  est.replicas.resize(replications);
  parallel_for(replications, threads, [&](std::size_t r) {
    est.replicas[r] = coupled_run(model, h, cfg, lag, max_iters, master.child("replica", r), opts);
  });
  for (const auto& r : est.replicas) est.censored += r.censored ? 1 : 0;
  est.curve = bound_curve(est.replicas, t_grid);
  est.t_mix = mixing_time(est.curve, epsilon);
  return est;
}

inline void write_replicas_csv(std::ostream& out, const std::vector<CoupledTrace>& replicas)
{
  // seed column: the master seed the replica streams were derived from
  io::CsvWriter w(out);
  w.header({"replica_id", "seed", "lag", "tau", "censored"});
  for (std::size_t r = 0; r < replicas.size(); ++r)
    w.row(r, replicas[r].seed, replicas[r].lag, replicas[r].meeting_time, replicas[r].censored ? 1 : 0);
}

inline void write_curve_csv(std::ostream& out, const MixingCurve& c)
{
  io::CsvWriter w(out);
  w.header({"t", "bound", "stderr"});
  for (std::size_t k = 0; k < c.t_grid.size(); ++k) w.row(c.t_grid[k], c.bound[k], c.stderr_[k]);
}

} // namespace coupling
} // namespace spikeslab
