#pragma once

#include "io.hpp"
#include "kernels.hpp"
#include "likelihood.hpp"
#include "posterior.hpp"
#include "rng.hpp"
#include "types.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace spikeslab {

enum class Algorithm { exact, async, sa_sgld };

inline const char* to_string(Algorithm a)
{
  switch (a) {
  case Algorithm::exact: return "exact";
  case Algorithm::async: return "async";
  case Algorithm::sa_sgld: return "sa_sgld";
  }
  return "?";
}

struct ChainState
{
  SparsityVector delta;
  ParamVector theta;
  Index iteration = 0;

  friend bool operator==(const ChainState& a, const ChainState& b)
  {
    return a.delta == b.delta && a.theta.size() == b.theta.size() && a.theta == b.theta;
  }
};

struct WarmStart
{
  ParamVector theta;
  SparsityVector delta;
};

struct SamplerConfig
{
  Algorithm algorithm = Algorithm::exact;
  KernelConfig kernel{};
  Index record_every = 1;
  Index total_iters = 1000;
  std::optional<WarmStart> init;  // empty: null model
};

class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Rejects algorithm / kernel / model combinations that cannot run.
inline void check_compatible(const SamplerConfig& cfg, ModelKind model, const Hyperparams& h)
{
  if (cfg.kernel.kind == KernelKind::exact_gaussian && model != ModelKind::linear)
    throw ConfigError("the exact_gaussian kernel requires the linear model");
  if (cfg.algorithm == Algorithm::sa_sgld && cfg.kernel.kind != KernelKind::sgld)
    throw ConfigError("sa_sgld requires the sgld kernel");
  if ((cfg.algorithm == Algorithm::sa_sgld || cfg.kernel.kind == KernelKind::sgld) && !h.B)
    throw ConfigError("the sgld kernel and sa_sgld require a batch size");
  if (cfg.kernel.inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (cfg.record_every < 1) throw ConfigError("record_every must be >= 1");
}

/// Named substreams of one iteration.
struct IterationStreams
{
  rng::Stream refresh, kernel, batch, select, bernoulli, screen_batch;

  explicit IterationStreams(const rng::Stream& iter)
    : refresh(iter.child("refresh")), kernel(iter.child("kernel")), batch(iter.child("batch")),
      select(iter.child("select")), bernoulli(iter.child("bernoulli")), screen_batch(iter.child("screen_batch"))
  {}
};

namespace detail {

/// STEP 1: refresh the spike coordinates, then move [theta]_delta with the configured kernel.
template <LikelihoodModel M>
ParamVector theta_update(const ChainState& state, const M& model, const Hyperparams& h, const KernelConfig& kernel,
                         const IterationStreams& streams)
{
  ParamVector theta = state.theta;
  refresh_inactive(theta, state.delta, h, streams.refresh);
  if (state.delta.count() == 0) return theta;

  const auto& support = state.delta.support();
  rng::Engine noise(streams.kernel);
  Vector u = gather(theta, support);
  switch (kernel.kind) {
  case KernelKind::exact_gaussian:
    if (model.kind() != ModelKind::linear) throw ConfigError("the exact_gaussian kernel requires the linear model");
    u = exact_conditional_draw(model.data(), state.delta, h.rho1, noise);
    break;
  case KernelKind::mala:
    for (Index s = 0; s < kernel.inner_steps; ++s) u = mala_step(model, state.delta, u, h, h.mala_step, noise).state;
    break;
  case KernelKind::sgld: {
    rng::Engine batch(streams.batch);
    for (Index s = 0; s < kernel.inner_steps; ++s) u = sgld_step(model, state.delta, u, h, noise, batch);
    break;
  }
  }
  scatter(theta, support, u);
  return theta;
}

inline std::vector<Index> draw_selection(const IterationStreams& streams, Index p, Index J)
{
  rng::Engine engine(streams.select);
  return rng::sample_without_replacement(engine, p, J);
}

} // namespace detail

/**
 * Sequential Gibbs sweep over `selection` with the exact conditionals q_j.
 * Coordinate j is set iff the uniform attached to j falls below q_j.
 */
template <LikelihoodModel M>
void exact_delta_sweep(SparsityVector& delta, const ParamVector& theta, const M& model, const Hyperparams& h,
                       const std::vector<Index>& selection, const rng::Stream& bernoulli)
{
  if (selection.empty()) return;
  const double a = penalty_const_a(h, delta.size());
  const auto& X = model.data().X;
  Vector m = model.margins(theta, delta);
  for (Index j : selection) {
    const double tj = theta[j];
    const bool was_on = delta[j];
    if (was_on) m.noalias() -= tj * X.col(static_cast<Eigen::Index>(j));
    const double q = inclusion_from_exponent(exact_exponent(a, h, tj, model.flip_difference(m, j, tj)));
    const bool on = bernoulli.uniform_at(j) < q;
    if (on) m.noalias() += tj * X.col(static_cast<Eigen::Index>(j));
    if (on != was_on) delta.set(j, on);
  }
}

/**
 * One iteration of the asymptotically exact sampler. STEP 2 visits the
 * selected coordinates in draw order, each Bernoulli conditioning on the
 * coordinates already updated (sequential Gibbs).
 */
template <LikelihoodModel M>
ChainState exact_step(const ChainState& state, const M& model, const Hyperparams& h, const SamplerConfig& cfg,
                      const rng::Stream& iter_stream)
{
  const IterationStreams streams(iter_stream);
  ChainState next;
  next.theta = detail::theta_update(state, model, h, cfg.kernel, streams);
  next.delta = state.delta;
  next.iteration = state.iteration + 1;

  const auto selection = detail::draw_selection(streams, state.delta.size(), h.J);
  exact_delta_sweep(next.delta, next.theta, model, h, selection, streams.bernoulli);
  return next;
}

/// Screening probabilities for the asynchronous samplers from one gradient at theta_vartheta.
inline void screen_independently(ChainState& next, const std::vector<Index>& selection, const Vector& grad,
                                 const Hyperparams& h, const rng::Stream& bernoulli)
{
  const double a = penalty_const_a(h, next.delta.size());
  for (Index k = 0; k < selection.size(); ++k) {
    const Index j = selection[k];
    const double q = inclusion_from_exponent(approx_exponent(a, h, next.theta[j], grad[static_cast<Eigen::Index>(k)]));
    next.delta.set(j, bernoulli.uniform_at(j) < q);
  }
}

/**
 * One iteration of the asynchronous sampler: a single gradient at
 * theta_vartheta, then J conditionally independent Bernoulli draws. Each
 * draw reads the uniform attached to its coordinate, so the result does not
 * depend on processing order.
 */
template <LikelihoodModel M>
ChainState async_step(const ChainState& state, const M& model, const Hyperparams& h, const SamplerConfig& cfg,
                      const rng::Stream& iter_stream)
{
  const IterationStreams streams(iter_stream);
  ChainState next;
  next.theta = detail::theta_update(state, model, h, cfg.kernel, streams);
  next.delta = state.delta;
  next.iteration = state.iteration + 1;

  const auto selection = detail::draw_selection(streams, state.delta.size(), h.J);
  if (selection.empty()) return next;
  const SparsityVector vartheta = screening_mask(selection, state.delta);
  const Vector grad = model.grad(next.theta, vartheta, selection);
  screen_independently(next, selection, grad, h, streams.bernoulli);
  return next;
}

/// Asynchronous sparse SGLD: SGLD refit plus screening from one fresh minibatch gradient.
template <LikelihoodModel M>
ChainState sa_sgld_step(const ChainState& state, const M& model, const Hyperparams& h, const SamplerConfig& cfg,
                        const rng::Stream& iter_stream)
{
  if (!h.B) throw ConfigError("sa_sgld requires a batch size");
  const IterationStreams streams(iter_stream);
  ChainState next;
  next.theta = detail::theta_update(state, model, h, cfg.kernel, streams);
  next.delta = state.delta;
  next.iteration = state.iteration + 1;

  const auto selection = detail::draw_selection(streams, state.delta.size(), h.J);
  if (selection.empty()) return next;
  const SparsityVector vartheta = screening_mask(selection, state.delta);
  rng::Engine batch_engine(streams.screen_batch);
  const auto batch = rng::sample_without_replacement(batch_engine, model.n(), *h.B);
  const Vector grad = model.minibatch_grad(next.theta, vartheta, batch, selection);
  screen_independently(next, selection, grad, h, streams.bernoulli);
  return next;
}

/// The asynchronous sampler with an sgld kernel screens with minibatch gradients (the sa_sgld step).
template <LikelihoodModel M>
ChainState sampler_step(const ChainState& state, const M& model, const Hyperparams& h, const SamplerConfig& cfg,
                        const rng::Stream& iter_stream)
{
  switch (cfg.algorithm) {
  case Algorithm::exact: return exact_step(state, model, h, cfg, iter_stream);
  case Algorithm::async:
    if (cfg.kernel.kind == KernelKind::sgld) return sa_sgld_step(state, model, h, cfg, iter_stream);
    return async_step(state, model, h, cfg, iter_stream);
  case Algorithm::sa_sgld: return sa_sgld_step(state, model, h, cfg, iter_stream);
  }
  throw ConfigError("unknown algorithm");
}

/// ||theta.delta - theta*|| / ||theta*||.
inline double relative_error_of(const ChainState& s, const ParamVector& theta_star)
{
  const double denom = theta_star.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("relative error: true signal is zero");
  return (masked(s.theta, s.delta) - theta_star).norm() / denom;
}

struct IterationRecord
{
  Index iteration = 0;
  Index support_size = 0;
  double log_post = 0.0;
  double test_pen_loglik = std::numeric_limits<double>::quiet_NaN();
  std::int64_t wall_ns = 0;
};

struct ChainSummary
{
  std::vector<double> inclusion_frequency;  // post burn-in
  double mean_support_size = 0.0;
  std::optional<double> relative_error;     // post burn-in, when theta* is attached
  Index post_burn_in = 0;
  double wall_seconds = 0.0;
};

struct Trace
{
  std::vector<ChainState> snapshots;        // initial state, then every record_every-th
  std::vector<IterationRecord> series;      // one per iteration (index 0 is the initial state)
  ChainSummary summary;
};

template <LikelihoodModel M>
struct RunOptions
{
  Index burn_in = 0;                        // iterations 1..burn_in excluded from the summary
  const ParamVector* theta_star = nullptr;
  const M* test_model = nullptr;
  bool record_series = true;
  bool record_log_post = true;
};

template <LikelihoodModel M>
ChainState initial_state(const SamplerConfig& cfg, const M& model, const Hyperparams& h, const rng::Stream& chain)
{
  ChainState s;
  const Index p = model.p();
  if (cfg.init) {
    if (cfg.init->delta.size() != p || static_cast<Index>(cfg.init->theta.size()) != p)
      throw ConfigError("warm start has the wrong dimension");
    s.delta = cfg.init->delta;
    s.theta = cfg.init->theta;
  } else {
    s.delta = SparsityVector(p);
    s.theta = ParamVector::Zero(static_cast<Eigen::Index>(p));
    refresh_inactive(s.theta, s.delta, h, chain.child("init"));
  }
  return s;
}

/**
 * Runs `cfg.total_iters` iterations from the configured initial state.
 * Deterministic given (cfg, data, chain stream); only `wall_ns` and
 * `wall_seconds` vary between runs.
 */
template <LikelihoodModel M>
Trace run_chain(const SamplerConfig& cfg, const M& model, const Hyperparams& h, const rng::Stream& chain,
                const RunOptions<M>& opts = {})
{
  check_compatible(cfg, model.kind(), h);
  using clock = std::chrono::steady_clock;

  Trace trace;
  ChainState state = initial_state(cfg, model, h, chain);
  const Index p = model.p();

  auto record = [&](const ChainState& s, std::int64_t ns) {
    if (!opts.record_series) return;
    IterationRecord r;
    r.iteration = s.iteration;
    r.support_size = s.delta.count();
    r.log_post = opts.record_log_post ? log_posterior_unnorm(s.delta, s.theta, model, h)
                                      : std::numeric_limits<double>::quiet_NaN();
    if (opts.test_model) r.test_pen_loglik = penalized_test_loglik(*opts.test_model, s.delta, s.theta, h);
    r.wall_ns = ns;
    trace.series.push_back(r);
  };

  trace.snapshots.push_back(state);
  record(state, 0);

  std::vector<double> counts(p, 0.0);
  double support_sum = 0.0, relerr_sum = 0.0;
  Index kept = 0;
  double total_ns = 0.0;

  for (Index k = 0; k < cfg.total_iters; ++k) {
    const auto t0 = clock::now();
    state = sampler_step(state, model, h, cfg, chain.child("iter", k));
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
    total_ns += static_cast<double>(ns);

    if (state.iteration > opts.burn_in) {
      for (Index j : state.delta.support()) counts[j] += 1.0;
      support_sum += static_cast<double>(state.delta.count());
      if (opts.theta_star) relerr_sum += relative_error_of(state, *opts.theta_star);
      ++kept;
    }
    if (state.iteration % cfg.record_every == 0) trace.snapshots.push_back(state);
    record(state, ns);
  }

  auto& sum = trace.summary;
  sum.post_burn_in = kept;
  sum.inclusion_frequency.assign(p, 0.0);
  if (kept > 0) {
    for (Index j = 0; j < p; ++j) sum.inclusion_frequency[j] = counts[j] / static_cast<double>(kept);
    sum.mean_support_size = support_sum / static_cast<double>(kept);
    if (opts.theta_star) sum.relative_error = relerr_sum / static_cast<double>(kept);
  }
  sum.wall_seconds = total_ns * 1e-9;
  return trace;
}

/// Per-iteration series: iteration,support_size,log_post,test_pen_loglik,wall_ns.
inline void write_trace_csv(std::ostream& out, const Trace& trace)
{
  io::CsvWriter w(out);
  w.header({"iteration", "support_size", "log_post", "test_pen_loglik", "wall_ns"});
  for (const auto& r : trace.series) w.row(r.iteration, r.support_size, r.log_post, r.test_pen_loglik, r.wall_ns);
}

/// Snapshots: iteration, delta as a bit string, then theta_0..theta_{p-1}.
inline void write_snapshots_csv(std::ostream& out, const Trace& trace)
{
  if (trace.snapshots.empty()) return;
  const Index p = trace.snapshots.front().delta.size();
  out << "iteration,delta";
  for (Index j = 0; j < p; ++j) out << ",theta_" << j;
  out << '\n';
  for (const auto& s : trace.snapshots) {
    out << s.iteration << ',' << s.delta.to_string();
    for (Index j = 0; j < p; ++j) out << ',' << io::fmt(s.theta[static_cast<Eigen::Index>(j)]);
    out << '\n';
  }
}

} // namespace spikeslab
