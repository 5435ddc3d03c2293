#pragma once

#include "coupling.hpp"
#include "io.hpp"
#include "lasso.hpp"
#include "likelihood.hpp"
#include "parallel.hpp"
#include "posterior.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "synthetic.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spikeslab {

/// Post-burn-in mean of |theta^(k) * delta^(k) - theta*| / |theta*| over states with iteration > burn_in.
inline double relative_error(const std::vector<ChainState>& states, const ParamVector& theta_star, Index burn_in)
{
  double sum = 0.0;
  Index kept = 0;
  for (const auto& s : states) {
    if (s.iteration <= burn_in) continue;
    sum += relative_error_of(s, theta_star);
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("relative_error: no iterates after burn-in");
  return sum / static_cast<double>(kept);
}

inline double relative_error(const Trace& trace, const ParamVector& theta_star, Index burn_in)
{
  return relative_error(trace.snapshots, theta_star, burn_in);
}

enum class ExperimentKind { mixing_vs_p, relative_error, pen_loglik_paths, runtime_table };

inline const char* to_string(ExperimentKind k)
{
  switch (k) {
  case ExperimentKind::mixing_vs_p: return "mixing_vs_p";
  case ExperimentKind::relative_error: return "relative_error";
  case ExperimentKind::pen_loglik_paths: return "pen_loglik_paths";
  case ExperimentKind::runtime_table: return "runtime_table";
  }
  return "?";
}

struct ExperimentConfig
{
  ExperimentKind kind = ExperimentKind::relative_error;
  ModelKind model = ModelKind::linear;
  std::vector<Index> p_grid{1000};
  std::vector<double> varrho_grid{0.0};
  double n_ratio = 0.5;                 // n = n_ratio * p
  Index s_star = 10;
  double signal_low = 6.0, signal_high = 7.0;
  double sigma = 1.0;
  bool normalize_columns = false;

  std::vector<Algorithm> algorithms{Algorithm::exact, Algorithm::async};
  KernelKind kernel = KernelKind::exact_gaussian;
  Index inner_steps = 1;

  double u = 1.5;
  std::optional<double> rho0;           // defaults to n
  double rho1 = 1.0;
  Index J = 100;                        // capped at p
  std::optional<Index> B;
  double gamma = 0.005;
  double mala_step = 0.01;

  Index replications = 10;
  std::optional<Index> niter;           // defaults to max(2000, p - 2000)
  std::optional<Index> burn_in;         // defaults to niter - 1000 (0 when niter <= 1000)

  Index lag = 1;
  Index coupling_max_iters = 10000;
  Index bootstrap = 200;
  double epsilon = 0.25;

  bool lasso_init = false;
  double lasso_scale = 1.0;

  unsigned threads = 1;
  std::uint64_t seed = 0;

  Index n_for(Index p) const
  {
    return std::max<Index>(1, static_cast<Index>(std::llround(n_ratio * static_cast<double>(p))));
  }
  Index niter_for(Index p) const { return niter ? *niter : std::max<Index>(2000, p > 2000 ? p - 2000 : 0); }
  Index burn_in_for(Index p) const
  {
    const Index it = niter_for(p);
    return burn_in ? *burn_in : (it > 1000 ? it - 1000 : 0);
  }

  SyntheticSpec spec_for(Index p, double varrho) const
  {
    SyntheticSpec s;
    s.n = n_for(p);
    s.p = p;
    s.varrho = varrho;
    s.s_star = std::min(s_star, p);
    s.signal_low = signal_low;
    s.signal_high = signal_high;
    s.model = model;
    s.sigma = sigma;
    s.normalize_columns = normalize_columns;
    s.seed = seed;
    return s;
  }

  Hyperparams hyperparams_for(Index n, Index p) const
  {
    Hyperparams h;
    h.u = u;
    h.rho0 = rho0.value_or(static_cast<double>(n));
    h.rho1 = rho1;
    h.J = std::min(J, p);
    h.B = B;
    h.gamma = gamma;
    h.mala_step = mala_step;
    return h;
  }

  SamplerConfig sampler_for(Algorithm a, Index p) const
  {
    SamplerConfig c;
    c.algorithm = a;
    c.kernel.kind = a == Algorithm::sa_sgld ? KernelKind::sgld : kernel;
    c.kernel.inner_steps = inner_steps;
    c.total_iters = niter_for(p);
    c.record_every = std::max<Index>(1, c.total_iters);
    return c;
  }
};

/// Departures from the simulation defaults (u = 1.5, rho0 = n, rho1 = 1, J = 100); reported, never fatal.
inline std::vector<std::string> paper_mismatches(const ExperimentConfig& cfg)
{
  std::vector<std::string> w;
  if (cfg.u != 1.5) w.push_back("u = " + io::fmt(cfg.u) + " differs from 1.5");
  if (cfg.rho0) w.push_back("rho0 fixed at " + io::fmt(*cfg.rho0) + " instead of n");
  if (cfg.rho1 != 1.0) w.push_back("rho1 = " + io::fmt(cfg.rho1) + " differs from 1");
  if (cfg.J != 100) w.push_back("J = " + std::to_string(cfg.J) + " differs from 100");
  for (Index p : cfg.p_grid)
    if (cfg.J > p) w.push_back("J capped at p = " + std::to_string(p));
  if (cfg.model == ModelKind::logistic) {
    if (cfg.mala_step != 0.01) w.push_back("MaLa step " + io::fmt(cfg.mala_step) + " differs from 0.01");
    if (cfg.gamma != 0.005) w.push_back("SGLD step " + io::fmt(cfg.gamma) + " differs from 0.005");
    if (cfg.B && *cfg.B != 100) w.push_back("batch size " + std::to_string(*cfg.B) + " differs from 100");
  }
  return w;
}

struct ReplicationMetrics
{
  Index p = 0;
  double varrho = 0.0;
  Algorithm algorithm = Algorithm::exact;
  Index replica = 0;
  std::uint64_t seed = 0;
  double relative_error = 0.0;
  Index true_support = 0;
  Index true_selected = 0;          // true coordinates with post-burn-in frequency >= 0.9
  Index null_selected = 0;          // null coordinates with frequency > 0.05
  double max_null_frequency = 0.0;
  double mean_support_size = 0.0;
  double wall_seconds = 0.0;
};

struct PathRow
{
  Algorithm algorithm = Algorithm::exact;
  Index iteration = 0;
  double mean_pen_loglik = 0.0;
};

struct MixingRow
{
  Index p = 0;
  Index replica = 0;
  Index tau = 0;
  bool censored = false;
  std::optional<Index> t_mix;
};

struct MixingPoint
{
  Index p = 0;
  Index n = 0;
  std::optional<Index> t_mix;
  double t_mix_se = 0.0;
  Index censored = 0;
  coupling::MixingCurve curve;
};

/**
 * Weighted degree-2 and degree-1 least-squares fits of y on x with known
 * standard errors. "Linear" means the quadratic coefficient is within two
 * standard errors of zero and the linear slope is positive.
 */
struct TrendTest
{
  std::vector<double> x, y, se;
  double quad = 0.0, quad_se = 0.0;
  double slope = 0.0, slope_se = 0.0;

  bool quad_negligible() const { return std::abs(quad) <= 2.0 * quad_se; }
  bool slope_positive() const { return slope > 0.0; }
  bool linear() const { return quad_negligible() && slope_positive(); }
};

inline TrendTest trend_test(std::vector<double> x, std::vector<double> y, std::vector<double> se)
{
  if (x.size() != y.size() || x.size() != se.size()) throw std::invalid_argument("trend_test: size mismatch");
  if (x.size() < 3) throw std::invalid_argument("trend_test: need at least three points");
  TrendTest t{std::move(x), std::move(y), std::move(se)};
  const auto m = static_cast<Eigen::Index>(t.x.size());
  // centre and scale x so the normal equations stay well conditioned
  double mean = 0.0;
  for (double v : t.x) mean += v;
  mean /= static_cast<double>(t.x.size());
  double scale = 0.0;
  for (double v : t.x) scale = std::max(scale, std::abs(v - mean));
  if (!(scale > 0.0)) throw std::invalid_argument("trend_test: x values must differ");

  auto fit = [&](int degree) {
    Matrix V(m, degree + 1);
    Vector w(m), b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double z = (t.x[i] - mean) / scale;
      double pw = 1.0;
      for (int d = 0; d <= degree; ++d, pw *= z) V(i, d) = pw;
      const double s = std::max(t.se[i], 1e-12);
      w[i] = 1.0 / (s * s);
      b[i] = t.y[i];
    }
    const Matrix A = V.transpose() * w.asDiagonal() * V;
    const Matrix cov = A.inverse();
    const Vector coef = cov * (V.transpose() * (w.asDiagonal() * b));
    return std::pair<Vector, Matrix>(coef, cov);
  };

  const auto [c2, cov2] = fit(2);
  t.quad = c2[2] / (scale * scale);
  t.quad_se = std::sqrt(cov2(2, 2)) / (scale * scale);
  const auto [c1, cov1] = fit(1);
  t.slope = c1[1] / scale;
  t.slope_se = std::sqrt(cov1(1, 1)) / scale;
  return t;
}

/**
 * Bootstrap standard error of t_mix over replicas, combined with the
 * variance 1/12 of rounding to the integer grid. Censored estimates count as
 * the last grid point.
 */
inline double bootstrap_tmix_se(const std::vector<coupling::CoupledTrace>& replicas, const std::vector<Index>& t_grid,
                                double epsilon, Index resamples, const rng::Stream& stream)
{
  if (replicas.empty() || t_grid.empty()) return 0.0;
  rng::Engine engine(stream);
  std::vector<coupling::CoupledTrace> draw(replicas.size());
  double s = 0.0, s2 = 0.0;
  for (Index b = 0; b < resamples; ++b) {
    for (auto& d : draw) d = replicas[engine.below(replicas.size())];
    const auto tm = coupling::mixing_time(coupling::bound_curve(draw, t_grid), epsilon);
    const double v = static_cast<double>(tm.value_or(t_grid.back()));
    s += v;
    s2 += v * v;
  }
  const double R = static_cast<double>(resamples);
  const double var = resamples > 1 ? std::max(0.0, (s2 - s * s / R) / (R - 1.0)) : 0.0;
  return std::sqrt(var + 1.0 / 12.0);
}

struct RuntimeRow
{
  Algorithm algorithm = Algorithm::exact;
  Index p = 0;
  double mean_s = 0.0;
  double sd_s = 0.0;
  Index replications = 0;
};

struct ExperimentReport
{
  ExperimentKind kind = ExperimentKind::relative_error;
  std::uint64_t seed = 0;
  Index replications = 0;
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::string> warnings;

  std::vector<ReplicationMetrics> metrics;
  std::vector<PathRow> paths;
  std::vector<MixingRow> mixing;
  std::vector<MixingPoint> mixing_points;
  std::optional<TrendTest> trend;
  std::vector<RuntimeRow> runtime;
};

namespace detail {

inline double quantile(std::vector<double> v, double q)
{
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::string join(const std::vector<double>& v)
{
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + io::fmt(v[k]);
  return s;
}

inline std::string join(const std::vector<Index>& v)
{
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + std::to_string(v[k]);
  return s;
}

template <typename Fn>
decltype(auto) with_model(ModelKind kind, const RegressionData& data, Fn&& fn)
{
  if (kind == ModelKind::linear) return fn(LinearModel(data));
  return fn(LogisticModel(data));
}

inline std::vector<std::pair<std::string, std::string>> report_header(const ExperimentConfig& cfg)
{
  std::vector<std::pair<std::string, std::string>> h{
    {"kind", to_string(cfg.kind)},
    {"model", to_string(cfg.model)},
    {"seed", std::to_string(cfg.seed)},
    {"replications", std::to_string(cfg.replications)},
    {"u", io::fmt(cfg.u)},
    {"rho0", cfg.rho0 ? io::fmt(*cfg.rho0) : "n"},
    {"rho1", io::fmt(cfg.rho1)},
    {"J", std::to_string(cfg.J)},
    {"B", cfg.B ? std::to_string(*cfg.B) : "none"},
    {"gamma", io::fmt(cfg.gamma)},
    {"mala_step", io::fmt(cfg.mala_step)},
    {"kernel", to_string(cfg.kernel)},
    {"p_grid", join(cfg.p_grid)},
    {"varrho_grid", join(cfg.varrho_grid)},
    {"n", io::fmt(cfg.n_ratio) + " * p"},
    {"test_n", "n"},
    {"s_star", std::to_string(cfg.s_star)},
    {"signal", "(" + io::fmt(-cfg.signal_high) + "," + io::fmt(-cfg.signal_low) + ") U (" +
                 io::fmt(cfg.signal_low) + "," + io::fmt(cfg.signal_high) + ")"},
    {"sigma", io::fmt(cfg.sigma)},
    {"niter", cfg.niter ? std::to_string(*cfg.niter) : "max(2000, p - 2000)"},
    {"burn_in", cfg.burn_in ? std::to_string(*cfg.burn_in) : "niter - 1000"},
    {"lasso_init", cfg.lasso_init ? "1" : "0"},
  };
  std::string algs;
  for (auto a : cfg.algorithms) algs += (algs.empty() ? "" : " ") + std::string(to_string(a));
  h.emplace_back("algorithms", algs);
  if (cfg.kind == ExperimentKind::mixing_vs_p) {
    h.emplace_back("lag", std::to_string(cfg.lag));
    h.emplace_back("epsilon", io::fmt(cfg.epsilon));
    h.emplace_back("coupling_max_iters", std::to_string(cfg.coupling_max_iters));
  }
  return h;
}

inline void validate_config(const ExperimentConfig& cfg)
{
  if (cfg.p_grid.empty()) throw ConfigError("experiment: empty p grid");
  if (cfg.varrho_grid.empty()) throw ConfigError("experiment: empty varrho grid");
  if (cfg.replications < 1) throw ConfigError("experiment: replications must be >= 1");
  if (cfg.kind != ExperimentKind::mixing_vs_p && cfg.algorithms.empty()) throw ConfigError("experiment: no algorithms");
  if (cfg.kind == ExperimentKind::pen_loglik_paths && (cfg.p_grid.size() != 1 || cfg.varrho_grid.size() != 1))
    throw ConfigError("experiment: penalized log-likelihood paths take a single (p, varrho) panel");
  for (Index p : cfg.p_grid)
    if (p < 1) throw ConfigError("experiment: p must be positive");
  for (Index p : cfg.p_grid) {
    const auto h = cfg.hyperparams_for(cfg.n_for(p), p);
    h.validate(p, cfg.n_for(p));
    cfg.spec_for(p, cfg.varrho_grid.front()).validate();
    if (cfg.kind != ExperimentKind::mixing_vs_p)
      for (auto a : cfg.algorithms) check_compatible(cfg.sampler_for(a, p), cfg.model, h);
    if (cfg.niter_for(p) > 0 && cfg.burn_in_for(p) >= cfg.niter_for(p) && cfg.kind == ExperimentKind::relative_error)
      throw ConfigError("experiment: burn-in must be smaller than the number of iterations");
  }
}

/// Substreams shared by every protocol: theta* per p, data per (p, varrho, replica), chains per the same key.
struct ExperimentStreams
{
  rng::Stream master;

  rng::Stream signal(Index p) const { return master.child("data").child("signal", p); }
  rng::Stream train(Index p, Index vi, Index r) const
  {
    return master.child("data").child("train", p).child("varrho", vi).child("replica", r);
  }
  rng::Stream test(Index p, Index vi, Index r) const
  {
    return master.child("data").child("test", p).child("varrho", vi).child("replica", r);
  }
  rng::Stream chain(Index p, Index vi, Index r) const
  {
    return master.child("chain").child("p", p).child("varrho", vi).child("replica", r);
  }
};

inline TrueSignal signal_for(const ExperimentConfig& cfg, const ExperimentStreams& st, Index p)
{
  rng::Engine e(st.signal(p));
  return generate_signal(cfg.spec_for(p, cfg.varrho_grid.front()), e);
}

/// Sampler config for one run, optionally warm-started from the lasso on the training data.
template <LikelihoodModel M>
SamplerConfig chain_config(const ExperimentConfig& cfg, Algorithm a, const M& model)
{
  SamplerConfig sc = cfg.sampler_for(a, model.p());
  if (cfg.lasso_init) {
    const auto fit = lasso_warm_start(model, default_lasso_lambda(model.data(), cfg.lasso_scale));
    sc.init = WarmStart{fit.theta, fit.support};
  }
  return sc;
}

inline ReplicationMetrics metrics_from(const Trace& trace, const TrueSignal& truth)
{
  ReplicationMetrics m;
  const auto& f = trace.summary.inclusion_frequency;
  m.true_support = truth.delta.count();
  m.relative_error = trace.summary.relative_error.value_or(std::numeric_limits<double>::quiet_NaN());
  m.mean_support_size = trace.summary.mean_support_size;
  m.wall_seconds = trace.summary.wall_seconds;
  for (Index j = 0; j < f.size(); ++j) {
    if (truth.delta[j]) {
      if (f[j] >= 0.9) ++m.true_selected;
    } else {
      m.max_null_frequency = std::max(m.max_null_frequency, f[j]);
      if (f[j] > 0.05) ++m.null_selected;
    }
  }
  return m;
}

inline void run_relative_error(const ExperimentConfig& cfg, ExperimentReport& rep, bool paths)
{
  const ExperimentStreams st{rng::Stream(cfg.seed)};
  struct Task { Index pi, vi, r; };
  std::vector<Task> tasks;
  for (Index pi = 0; pi < cfg.p_grid.size(); ++pi)
    for (Index vi = 0; vi < cfg.varrho_grid.size(); ++vi)
      for (Index r = 0; r < cfg.replications; ++r) tasks.push_back({pi, vi, r});

  std::vector<TrueSignal> truths;
  for (Index p : cfg.p_grid) truths.push_back(signal_for(cfg, st, p));

  const Index A = cfg.algorithms.size();
  std::vector<ReplicationMetrics> slots(tasks.size() * A);
  std::vector<std::vector<double>> series(paths ? tasks.size() * A : 0);

  parallel_for(tasks.size(), cfg.threads, [&](std::size_t t) {
    const auto [pi, vi, r] = tasks[t];
    const Index p = cfg.p_grid[pi];
    const auto spec = cfg.spec_for(p, cfg.varrho_grid[vi]);
    const auto& truth = truths[pi];
    const RegressionData train = generate_dataset(spec, truth.theta, st.train(p, vi, r));
    std::optional<RegressionData> test;
    if (paths) test = generate_dataset(spec, truth.theta, st.test(p, vi, r));
    const auto h = cfg.hyperparams_for(spec.n, p);

    with_model(cfg.model, train, [&](const auto& model) {
      using M = std::decay_t<decltype(model)>;
      std::optional<M> test_model;
      if (test) test_model.emplace(*test);
      for (Index a = 0; a < A; ++a) {
        const SamplerConfig sc = chain_config(cfg, cfg.algorithms[a], model);
        RunOptions<M> opts;
        opts.burn_in = cfg.burn_in_for(p);
        opts.theta_star = &truth.theta;
        opts.record_series = paths;
        opts.record_log_post = false;
        if (test_model) opts.test_model = &*test_model;
        const Trace trace = run_chain(sc, model, h, st.chain(p, vi, r), opts);
        ReplicationMetrics m = metrics_from(trace, truth);
        m.p = p;
        m.varrho = cfg.varrho_grid[vi];
        m.algorithm = cfg.algorithms[a];
        m.replica = r;
        m.seed = cfg.seed;
        slots[t * A + a] = m;
        if (paths) {
          auto& s = series[t * A + a];
          s.reserve(trace.series.size());
          for (const auto& rec : trace.series) s.push_back(rec.test_pen_loglik);
        }
      }
      return 0;
    });
  });

  // deterministic reduce: p, varrho, algorithm, replica
  for (Index pi = 0; pi < cfg.p_grid.size(); ++pi)
    for (Index vi = 0; vi < cfg.varrho_grid.size(); ++vi)
      for (Index a = 0; a < A; ++a)
        for (Index r = 0; r < cfg.replications; ++r) {
          const Index t = (pi * cfg.varrho_grid.size() + vi) * cfg.replications + r;
          rep.metrics.push_back(slots[t * A + a]);
        }

  if (paths) {
    for (Index a = 0; a < A; ++a) {
      std::vector<double> acc;
      Index count = 0;
      for (Index t = 0; t < tasks.size(); ++t) {
        const auto& s = series[t * A + a];
        if (acc.empty()) acc.assign(s.size(), 0.0);
        for (std::size_t k = 0; k < s.size() && k < acc.size(); ++k) acc[k] += s[k];
        ++count;
      }
      for (std::size_t k = 0; k < acc.size(); ++k)
        rep.paths.push_back({cfg.algorithms[a], k, acc[k] / static_cast<double>(count)});
    }
  }
}

inline void run_mixing(const ExperimentConfig& cfg, ExperimentReport& rep)
{
  if (cfg.model != ModelKind::linear) throw ConfigError("mixing estimation requires the linear model");
  const ExperimentStreams st{rng::Stream(cfg.seed)};
  std::vector<Index> grid(cfg.coupling_max_iters + 1);
  for (Index t = 0; t < grid.size(); ++t) grid[t] = t;

  std::vector<double> xs, ys, ses;
  for (Index p : cfg.p_grid) {
    const auto spec = cfg.spec_for(p, cfg.varrho_grid.front());
    const auto truth = signal_for(cfg, st, p);
    const RegressionData data = generate_dataset(spec, truth.theta, st.train(p, 0, 0));
    const LinearModel model(data);
    const auto h = cfg.hyperparams_for(spec.n, p);
    SamplerConfig sc;
    sc.algorithm = Algorithm::exact;
    sc.kernel.kind = KernelKind::exact_gaussian;
    const auto est = coupling::estimate_mixing_bound(model, h, sc, cfg.lag, cfg.replications, grid,
                                                     cfg.coupling_max_iters, st.master.child("coupling").child("p", p),
                                                     cfg.threads, cfg.epsilon);
    MixingPoint pt;
    pt.p = p;
    pt.n = spec.n;
    pt.t_mix = est.t_mix;
    pt.censored = est.censored;
    pt.t_mix_se = bootstrap_tmix_se(est.replicas, grid, cfg.epsilon, cfg.bootstrap,
                                    st.master.child("bootstrap").child("p", p));
    pt.curve = est.curve;
    for (Index r = 0; r < est.replicas.size(); ++r)
      rep.mixing.push_back({p, r, est.replicas[r].meeting_time, est.replicas[r].censored, est.t_mix});
    if (est.censored > 0)
      rep.warnings.push_back(std::to_string(est.censored) + " censored replicas at p = " + std::to_string(p));
    if (est.t_mix) {
      xs.push_back(static_cast<double>(p));
      ys.push_back(static_cast<double>(*est.t_mix));
      ses.push_back(pt.t_mix_se);
    }
    rep.mixing_points.push_back(std::move(pt));
  }
  if (xs.size() >= 3) rep.trend = trend_test(xs, ys, ses);
}

inline void run_runtime(const ExperimentConfig& cfg, ExperimentReport& rep)
{
  const ExperimentStreams st{rng::Stream(cfg.seed)};
  // timed runs are sequential so chains do not compete for cores
  for (Index p : cfg.p_grid) {
    const auto spec = cfg.spec_for(p, cfg.varrho_grid.front());
    const auto truth = signal_for(cfg, st, p);
    const auto h = cfg.hyperparams_for(spec.n, p);
    std::vector<std::vector<double>> secs(cfg.algorithms.size());
    for (Index r = 0; r < cfg.replications; ++r) {
      const RegressionData data = generate_dataset(spec, truth.theta, st.train(p, 0, r));
      with_model(cfg.model, data, [&](const auto& model) {
        using M = std::decay_t<decltype(model)>;
        for (Index a = 0; a < cfg.algorithms.size(); ++a) {
          const SamplerConfig sc = chain_config(cfg, cfg.algorithms[a], model);
          RunOptions<M> opts;
          opts.record_series = false;
          const Trace trace = run_chain(sc, model, h, st.chain(p, 0, r), opts);
          secs[a].push_back(trace.summary.wall_seconds);
        }
        return 0;
      });
    }
    for (Index a = 0; a < cfg.algorithms.size(); ++a) {
      const auto& v = secs[a];
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
      rep.runtime.push_back({cfg.algorithms[a], p, mean, std::sqrt(var), v.size()});
    }
  }
}

} // namespace detail

/// Runs one protocol across replications. Deterministic given the config (timings aside).
inline ExperimentReport run_experiment(const ExperimentConfig& cfg)
{
  detail::validate_config(cfg);
  ExperimentReport rep;
  rep.kind = cfg.kind;
  rep.seed = cfg.seed;
  rep.replications = cfg.replications;
  rep.header = detail::report_header(cfg);
  rep.warnings = paper_mismatches(cfg);
  switch (cfg.kind) {
  case ExperimentKind::relative_error: detail::run_relative_error(cfg, rep, false); break;
  case ExperimentKind::pen_loglik_paths: detail::run_relative_error(cfg, rep, true); break;
  case ExperimentKind::mixing_vs_p: detail::run_mixing(cfg, rep); break;
  case ExperimentKind::runtime_table: detail::run_runtime(cfg, rep); break;
  }
  return rep;
}

/**
 * Writes report.txt and the four CSV tables (mixing, relerr, paths, runtime;
 * empty tables keep their header), plus recovery.csv, summary.csv and, for
 * mixing runs, trend.csv and one bound curve per p.
 */
inline std::vector<std::filesystem::path> write_report(const ExperimentReport& rep, const std::filesystem::path& dir)
{
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name) {
    written.push_back(dir / name);
    return io::open_out(dir / name);
  };

  {
    auto out = open("report.txt");
    for (const auto& [k, v] : rep.header) out << k << " = " << v << '\n';
    for (const auto& w : rep.warnings) out << "warning = " << w << '\n';
    if (rep.trend) {
      const auto& t = *rep.trend;
      out << "trend_slope = " << io::fmt(t.slope) << '\n'
          << "trend_quad = " << io::fmt(t.quad) << '\n'
          << "trend_quad_se = " << io::fmt(t.quad_se) << '\n'
          << "trend_linear = " << (t.linear() ? 1 : 0) << '\n';
    }
  }
  {
    auto out = open("mixing.csv");
    io::CsvWriter w(out);
    w.header({"p", "replica", "tau", "t_mix"});
    for (const auto& m : rep.mixing)
      w.row(m.p, m.replica, m.tau, m.t_mix ? std::to_string(*m.t_mix) : std::string("NA"));
  }
  {
    auto out = open("relerr.csv");
    io::CsvWriter w(out);
    w.header({"p", "varrho", "algorithm", "replica", "E"});
    if (rep.kind == ExperimentKind::relative_error)
      for (const auto& m : rep.metrics) w.row(m.p, m.varrho, to_string(m.algorithm), m.replica, m.relative_error);
  }
  {
    auto out = open("paths.csv");
    io::CsvWriter w(out);
    w.header({"algorithm", "iteration", "mean_pen_loglik"});
    for (const auto& r : rep.paths) w.row(to_string(r.algorithm), r.iteration, r.mean_pen_loglik);
  }
  {
    auto out = open("runtime.csv");
    io::CsvWriter w(out);
    w.header({"algorithm", "p", "mean_s", "sd_s"});
    for (const auto& r : rep.runtime) w.row(to_string(r.algorithm), r.p, r.mean_s, r.sd_s);
  }
  if (!rep.metrics.empty()) {
    auto out = open("recovery.csv");
    io::CsvWriter w(out);
    w.header({"p", "varrho", "algorithm", "replica", "seed", "E", "true_support", "true_selected", "null_selected",
              "max_null_frequency", "mean_support_size"});
    for (const auto& m : rep.metrics)
      w.row(m.p, m.varrho, to_string(m.algorithm), m.replica, m.seed, m.relative_error, m.true_support,
            m.true_selected, m.null_selected, m.max_null_frequency, m.mean_support_size);

    auto sout = open("summary.csv");
    io::CsvWriter s(sout);
    s.header({"p", "varrho", "algorithm", "replications", "mean_E", "q10_E", "q50_E", "q90_E", "full_recovery"});
    for (std::size_t k = 0; k < rep.metrics.size();) {
      const auto& first = rep.metrics[k];
      std::vector<double> es;
      Index full = 0;
      std::size_t e = k;
      for (; e < rep.metrics.size() && rep.metrics[e].p == first.p && rep.metrics[e].varrho == first.varrho &&
             rep.metrics[e].algorithm == first.algorithm;
           ++e) {
        es.push_back(rep.metrics[e].relative_error);
        if (rep.metrics[e].true_selected == rep.metrics[e].true_support) ++full;
      }
      double mean = 0.0;
      for (double v : es) mean += v;
      mean /= static_cast<double>(es.size());
      s.row(first.p, first.varrho, to_string(first.algorithm), es.size(), mean, detail::quantile(es, 0.1),
            detail::quantile(es, 0.5), detail::quantile(es, 0.9), full);
      k = e;
    }
  }
  if (!rep.mixing_points.empty()) {
    auto out = open("trend.csv");
    io::CsvWriter w(out);
    w.header({"p", "n", "t_mix", "t_mix_se", "censored"});
    for (const auto& pt : rep.mixing_points)
      w.row(pt.p, pt.n, pt.t_mix ? std::to_string(*pt.t_mix) : std::string("NA"), pt.t_mix_se, pt.censored);
    for (const auto& pt : rep.mixing_points) {
      auto c = open("curve_p" + std::to_string(pt.p) + ".csv");
      coupling::write_curve_csv(c, pt.curve);
    }
  }
  return written;
}

} // namespace spikeslab
