#include "CLI11.hpp"

#include "spikeslab/experiments.hpp"
#include "spikeslab/io.hpp"
#include "spikeslab/oracle.hpp"
#include "spikeslab/samplers.hpp"
#include "spikeslab/synthetic.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace spikeslab;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kValidation = 3, kIo = 4 };

struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct ValidationFailure : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kFigures{"mixing_lm", "relerr_lm", "paths_lm", "paths_logistic", "relerr_logistic",
                                        "runtime"};

struct DataOptions
{
  std::optional<Index> n;
  Index p = 1000;
  double varrho = 0.0;
  Index s_star = 10;
  double signal_low = 6.0;
  double signal_high = 7.0;
  std::string model = "linear";
  double sigma = 1.0;
  bool normalize = false;
};

struct PriorOptions
{
  double u = 1.5;
  std::optional<double> rho0;
  double rho1 = 1.0;
  Index J = 100;
  std::optional<Index> batch;
  double gamma = 0.005;
  double mala_step = 0.01;
};

struct ChainOptions
{
  std::string algorithm = "exact";
  std::string kernel = "auto";
  Index iters = 2000;
  std::optional<Index> burn_in;
  Index record_every = 1;
  Index inner_steps = 1;
  bool lasso_init = false;
};

struct CommonOptions
{
  std::uint64_t seed = 0;
  std::string out = "out";
  unsigned threads = 1;
};

ModelKind parse_model(const std::string& s)
{
  if (s == "linear") return ModelKind::linear;
  if (s == "logistic") return ModelKind::logistic;
  throw UsageError("unknown model: " + s);
}

Algorithm parse_algorithm(const std::string& s)
{
  if (s == "exact") return Algorithm::exact;
  if (s == "async") return Algorithm::async;
  if (s == "sa_sgld") return Algorithm::sa_sgld;
  throw UsageError("unknown algorithm: " + s);
}

KernelKind parse_kernel(const std::string& s, ModelKind model, Algorithm a)
{
  if (s == "auto") {
    if (a == Algorithm::sa_sgld) return KernelKind::sgld;
    return model == ModelKind::linear ? KernelKind::exact_gaussian : KernelKind::mala;
  }
  if (s == "exact_gaussian") return KernelKind::exact_gaussian;
  if (s == "mala") return KernelKind::mala;
  if (s == "sgld") return KernelKind::sgld;
  throw UsageError("unknown kernel: " + s);
}

std::string config_path;

void add_config_option(CLI::App* app)
{
  app->add_option("--config", config_path, "plain-text key = value file (# comments); command-line flags take precedence")
    ->check(CLI::ExistingFile);
}

std::string trim(std::string s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

/// key = value lines become --key=value arguments; keys the subcommand does not know are ignored.
std::vector<std::string> config_arguments(const CLI::App& sub, const std::string& path)
{
  auto in = io::open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config " + path + ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config" || value.empty() || !sub.get_option_no_throw("--" + key)) continue;
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

/// Splices the config file of the selected subcommand in front of the explicit flags.
std::vector<std::string> expand_config(const CLI::App& app, int argc, char** argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; }))
    if (s->get_name() == args.front()) sub = s;
  if (!sub) return args;
  std::vector<std::string> rest;
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!file) return args;
  if (!fs::is_regular_file(*file)) throw UsageError("config file not found: " + *file);
  std::vector<std::string> out{args.front(), "--config", *file};
  for (auto& a : config_arguments(*sub, *file)) out.push_back(std::move(a));
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

void add_common(CLI::App* app, CommonOptions& c, bool threads)
{
  app->add_option("--seed", c.seed, "master seed (64-bit unsigned); every random draw derives from it");
  app->add_option("--out", c.out, "output directory");
  if (threads) app->add_option("--threads", c.threads, "worker threads for replications; results do not depend on it");
}

void add_data(CLI::App* app, DataOptions& d)
{
  app->add_option("--n", d.n, "training sample size (default p/2, as in the simulations)");
  app->add_option("--p", d.p, "number of regressors");
  app->add_option("--varrho", d.varrho, "AR(1) correlation between neighbouring regressors (simulations: 0 and 0.9)");
  app->add_option("--s-star", d.s_star, "number of non-zero true coefficients (simulations: 10)");
  app->add_option("--signal-low", d.signal_low, "lower end of the true magnitude band (simulations: 6)");
  app->add_option("--signal-high", d.signal_high, "upper end of the true magnitude band (simulations: 7)");
  app->add_option("--model", d.model, "likelihood: linear or logistic")->check(CLI::IsMember({"linear", "logistic"}));
  app->add_option("--sigma", d.sigma, "noise standard deviation of the linear model (simulations: 1)");
  app->add_flag("--normalize-columns", d.normalize, "rescale every column of X to norm sqrt(n)");
}

void add_prior(CLI::App* app, PriorOptions& pr)
{
  app->add_option("--u", pr.u, "prior sparsity exponent u > 1 (simulations: 1.5)");
  app->add_option("--rho0", pr.rho0, "spike precision (default n, as in the simulations)");
  app->add_option("--rho1", pr.rho1, "slab precision (simulations: 1)");
  app->add_option("--J", pr.J, "coordinates screened per iteration, capped at p (simulations: 100)");
  app->add_option("--batch-size", pr.batch, "SGLD minibatch size B; required by sa_sgld and the sgld kernel (logistic runs: 100)");
  app->add_option("--gamma", pr.gamma, "SGLD step size (logistic runs: 0.005)");
  app->add_option("--mala-step", pr.mala_step, "MaLa step size (logistic runs: 0.01)");
}

void add_chain(CLI::App* app, ChainOptions& ch)
{
  app->add_option("--algorithm", ch.algorithm, "exact (Gibbs screening), async (independent screening) or sa_sgld")
    ->check(CLI::IsMember({"exact", "async", "sa_sgld"}));
  app->add_option("--kernel", ch.kernel,
                  "theta kernel: auto, exact_gaussian (linear only), mala or sgld; async with sgld screens with minibatches")
    ->check(CLI::IsMember({"auto", "exact_gaussian", "mala", "sgld"}));
  app->add_option("--iters", ch.iters, "number of iterations");
  app->add_option("--burn-in", ch.burn_in, "iterations excluded from summaries (default iters - 1000, or 0)");
  app->add_option("--record-every", ch.record_every, "snapshot thinning");
  app->add_option("--inner-steps", ch.inner_steps, "kernel steps per iteration");
  app->add_flag("--lasso-init", ch.lasso_init, "start from the lasso estimate instead of the null model");
}

SyntheticSpec make_spec(const DataOptions& d, std::uint64_t seed)
{
  SyntheticSpec s;
  if (d.p < 1) throw UsageError("p must be positive");
  s.p = d.p;
  s.n = d.n.value_or(std::max<Index>(1, d.p / 2));
  s.varrho = d.varrho;
  s.s_star = d.s_star;
  s.signal_low = d.signal_low;
  s.signal_high = d.signal_high;
  s.model = parse_model(d.model);
  s.sigma = d.sigma;
  s.normalize_columns = d.normalize;
  s.seed = seed;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return s;
}

Hyperparams make_hyper(const PriorOptions& pr, Index n, Index p)
{
  Hyperparams h;
  h.u = pr.u;
  h.rho0 = pr.rho0.value_or(static_cast<double>(n));
  h.rho1 = pr.rho1;
  h.J = std::min(pr.J, p);
  h.B = pr.batch;
  h.gamma = pr.gamma;
  h.mala_step = pr.mala_step;
  try {
    h.validate(p, n);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return h;
}

void write_effective_config(const CLI::App& app, const fs::path& dir)
{
  auto out = io::open_out(dir / "config.ini");
  std::istringstream all(app.config_to_str(true, false));
  std::string line;
  while (std::getline(all, line))
    if (line.rfind("config=", 0) != 0 && line.find("=\"\"") == std::string::npos) out << line << '\n';
}

void write_vector_csv(const fs::path& path, const char* name, const Vector& v)
{
  auto out = io::open_out(path);
  io::CsvWriter w(out);
  w.header({"j", name});
  for (Eigen::Index j = 0; j < v.size(); ++j) w.row(static_cast<Index>(j), v[j]);
}

struct Dataset
{
  SyntheticSpec spec;
  RegressionData train;
  std::optional<RegressionData> test;
  std::optional<TrueSignal> truth;
};

/// The same streams as replica 0 of an experiment at this p.
Dataset synthesize(const SyntheticSpec& spec, std::uint64_t seed, bool with_test)
{
  const rng::Stream master(seed);
  Dataset d;
  d.spec = spec;
  rng::Engine se(master.child("data").child("signal", spec.p));
  d.truth = generate_signal(spec, se);
  d.train = generate_dataset(spec, d.truth->theta, master.child("data").child("train", spec.p).child("varrho", 0).child("replica", 0));
  if (with_test)
    d.test = generate_dataset(spec, d.truth->theta, master.child("data").child("test", spec.p).child("varrho", 0).child("replica", 0));
  return d;
}

Dataset load_dataset(const fs::path& dir, const DataOptions& opts)
{
  Dataset d;
  const auto X = io::read_numeric_csv(dir / "X.csv");
  const auto y = io::read_numeric_csv(dir / "y.csv");
  if (X.empty() || y.size() != X.size()) throw UsageError("dataset in " + dir.string() + ": X and y row counts differ");
  d.train.X.resize(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(X.front().size()));
  d.train.y.resize(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = 0; j < X[i].size(); ++j) d.train.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = X[i][j];
    d.train.y[static_cast<Eigen::Index>(i)] = y[i].back();
  }
  d.spec.n = d.train.n();
  d.spec.p = d.train.p();
  d.spec.model = parse_model(opts.model);
  d.train.sigma2 = d.spec.model == ModelKind::linear ? opts.sigma * opts.sigma : 1.0;
  if (fs::exists(dir / "theta_star.csv")) {
    const auto t = io::read_numeric_csv(dir / "theta_star.csv");
    TrueSignal s{ParamVector::Zero(d.train.X.cols()), SparsityVector(d.train.p())};
    for (const auto& row : t) {
      const auto j = static_cast<Index>(row.at(0));
      if (j >= d.train.p()) throw io::IoError("theta_star.csv: index out of range");
      s.theta[static_cast<Eigen::Index>(j)] = row.at(1);
      if (row.at(1) != 0.0) s.delta.set(j, true);
    }
    d.truth = s;
  }
  try {
    d.train.validate(d.spec.model);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return d;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const CLI::App& app, const DataOptions& dopt, const CommonOptions& c)
{
  const auto spec = make_spec(dopt, c.seed);
  const Dataset d = synthesize(spec, c.seed, false);
  const fs::path dir = c.out;
  {
    auto out = io::open_out(dir / "X.csv");
    for (Index j = 0; j < spec.p; ++j) out << (j ? "," : "") << 'x' << j;
    out << '\n';
    for (Eigen::Index i = 0; i < d.train.X.rows(); ++i) {
      for (Eigen::Index j = 0; j < d.train.X.cols(); ++j) out << (j ? "," : "") << io::fmt(d.train.X(i, j));
      out << '\n';
    }
  }
  write_vector_csv(dir / "y.csv", "y", d.train.y);
  write_vector_csv(dir / "theta_star.csv", "theta", d.truth->theta);
  {
    auto out = io::open_out(dir / "delta_star.csv");
    io::CsvWriter w(out);
    w.header({"j", "delta"});
    for (Index j = 0; j < spec.p; ++j) w.row(j, d.truth->delta[j] ? 1 : 0);
  }
  {
    // keys match the generate flags, so the manifest can be fed back through --config
    auto out = io::open_out(dir / "manifest.txt");
    out << "# dataset manifest\n"
        << "n = " << spec.n << '\n'
        << "p = " << spec.p << '\n'
        << "varrho = " << io::fmt(spec.varrho) << '\n'
        << "s-star = " << spec.s_star << '\n'
        << "signal-low = " << io::fmt(spec.signal_low) << '\n'
        << "signal-high = " << io::fmt(spec.signal_high) << '\n'
        << "model = " << to_string(spec.model) << '\n'
        << "sigma = " << io::fmt(spec.sigma) << '\n'
        << "normalize-columns = " << (spec.normalize_columns ? "true" : "false") << '\n'
        << "seed = " << c.seed << '\n';
    for (const char* f : {"X.csv", "y.csv", "theta_star.csv", "delta_star.csv"})
      out << "fnv1a64." << f << " = " << io::file_hash(dir / f) << '\n';
  }
  (void)app;
  std::cout << "wrote n=" << spec.n << " p=" << spec.p << " dataset to " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- sample

int cmd_sample(const CLI::App& app, const DataOptions& dopt, const PriorOptions& popt, const ChainOptions& copt,
               const CommonOptions& c, const std::string& data_dir)
{
  const Dataset d = data_dir.empty() ? synthesize(make_spec(dopt, c.seed), c.seed, true) : load_dataset(data_dir, dopt);
  const ModelKind model_kind = d.spec.model;
  const Index n = d.train.n(), p = d.train.p();
  const auto h = make_hyper(popt, n, p);

  SamplerConfig cfg;
  cfg.algorithm = parse_algorithm(copt.algorithm);
  cfg.kernel.kind = parse_kernel(copt.kernel, model_kind, cfg.algorithm);
  cfg.kernel.inner_steps = copt.inner_steps;
  cfg.total_iters = copt.iters;
  cfg.record_every = copt.record_every;
  if ((cfg.algorithm == Algorithm::sa_sgld || cfg.kernel.kind == KernelKind::sgld) && !h.B)
    throw UsageError("sa_sgld and the sgld kernel need --batch-size (the logistic runs use 100)");
  try {
    check_compatible(cfg, model_kind, h);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("incompatible configuration: ") + e.what());
  }
  const Index burn_in = copt.burn_in.value_or(copt.iters > 1000 ? copt.iters - 1000 : 0);

  const fs::path dir = c.out;
  const rng::Stream chain = rng::Stream(c.seed).child("chain").child("p", p).child("varrho", 0).child("replica", 0);
  auto run = [&](const auto& model) {
    using M = std::decay_t<decltype(model)>;
    SamplerConfig sc = cfg;
    if (copt.lasso_init) {
      const auto fit = lasso_warm_start(model, default_lasso_lambda(d.train));
      if (!fit.warning.empty()) std::cerr << "warning: " << fit.warning << '\n';
      sc.init = WarmStart{fit.theta, fit.support};
    }
    std::optional<M> test_model;
    if (d.test) test_model.emplace(*d.test);
    RunOptions<M> opts;
    opts.burn_in = burn_in;
    if (d.truth) opts.theta_star = &d.truth->theta;
    if (test_model) opts.test_model = &*test_model;
    return run_chain(sc, model, h, chain, opts);
  };
  const Trace trace = model_kind == ModelKind::linear ? run(LinearModel(d.train)) : run(LogisticModel(d.train));

  {
    auto out = io::open_out(dir / "trace.csv");
    write_trace_csv(out, trace);
  }
  {
    auto out = io::open_out(dir / "snapshots.csv");
    write_snapshots_csv(out, trace);
  }
  {
    auto out = io::open_out(dir / "frequencies.csv");
    io::CsvWriter w(out);
    w.header({"j", "frequency", "true_delta"});
    for (Index j = 0; j < p; ++j)
      w.row(j, trace.summary.inclusion_frequency[j], d.truth ? (d.truth->delta[j] ? 1 : 0) : -1);
  }
  {
    auto out = io::open_out(dir / "summary.txt");
    out << "algorithm = " << to_string(cfg.algorithm) << '\n'
        << "kernel = " << to_string(cfg.kernel.kind) << '\n'
        << "model = " << to_string(model_kind) << '\n'
        << "n = " << n << "\np = " << p << '\n'
        << "iterations = " << cfg.total_iters << '\n'
        << "burn_in = " << burn_in << '\n'
        << "post_burn_in = " << trace.summary.post_burn_in << '\n'
        << "mean_support_size = " << io::fmt(trace.summary.mean_support_size) << '\n';
    if (trace.summary.relative_error) out << "relative_error = " << io::fmt(*trace.summary.relative_error) << '\n';
    out << "wall_seconds = " << io::fmt(trace.summary.wall_seconds) << '\n';
  }
  write_effective_config(app, dir);
  std::cout << "mean support size " << trace.summary.mean_support_size;
  if (trace.summary.relative_error) std::cout << ", relative error " << *trace.summary.relative_error;
  std::cout << ", " << trace.summary.wall_seconds << " s\n";
  return kOk;
}

// ---------------------------------------------------------------- mix

struct MixOptions
{
  Index lag = 1;
  Index replications = 50;
  Index max_iters = 10000;
  double epsilon = 0.25;
  bool coordinatewise = false;
};

int cmd_mix(const CLI::App& app, const DataOptions& dopt, const PriorOptions& popt, const ChainOptions& copt,
            const MixOptions& m, const CommonOptions& c)
{
  const auto spec = make_spec(dopt, c.seed);
  if (spec.model != ModelKind::linear)
    throw UsageError("unsupported configuration: coupled chains are implemented for the linear model only");
  if (copt.algorithm != "exact" || (copt.kernel != "auto" && copt.kernel != "exact_gaussian"))
    throw UsageError("unsupported configuration: coupled chains need --algorithm exact with the exact_gaussian kernel");
  if (m.lag < 1 || m.replications < 1) throw UsageError("need --lag >= 1 and --replications >= 1");
  const Dataset d = synthesize(spec, c.seed, false);
  const LinearModel model(d.train);
  const auto h = make_hyper(popt, spec.n, spec.p);
  SamplerConfig cfg;
  cfg.algorithm = Algorithm::exact;
  cfg.kernel.kind = KernelKind::exact_gaussian;
  std::vector<Index> grid(m.max_iters + 1);
  for (Index t = 0; t < grid.size(); ++t) grid[t] = t;
  coupling::CouplingOptions co;
  co.coordinatewise_spike_blocks = m.coordinatewise;
  auto est = coupling::estimate_mixing_bound(model, h, cfg, m.lag, m.replications, grid, m.max_iters,
                                             rng::Stream(c.seed).child("coupling").child("p", spec.p), c.threads,
                                             m.epsilon, co);
  for (auto& r : est.replicas) r.seed = c.seed;

  const fs::path dir = c.out;
  {
    auto out = io::open_out(dir / "mixing.csv");
    io::CsvWriter w(out);
    w.header({"p", "replica", "tau", "t_mix"});
    for (Index r = 0; r < est.replicas.size(); ++r)
      w.row(spec.p, r, est.replicas[r].meeting_time, est.t_mix ? std::to_string(*est.t_mix) : std::string("NA"));
  }
  {
    auto out = io::open_out(dir / "replicas.csv");
    coupling::write_replicas_csv(out, est.replicas);
  }
  {
    auto out = io::open_out(dir / "curve.csv");
    coupling::write_curve_csv(out, est.curve);
  }
  write_effective_config(app, dir);
  std::cout << "p=" << spec.p << " n=" << spec.n << " lag=" << m.lag << " R=" << m.replications << " t_mix("
            << m.epsilon << ")=" << (est.t_mix ? std::to_string(*est.t_mix) : std::string("not reached"))
            << " censored=" << est.censored << '\n';
  return kOk;
}

// ---------------------------------------------------------------- validate

struct ValidateOptions
{
  std::optional<double> tolerance;
  double null_tolerance = 0.05;
};

int cmd_validate(const CLI::App& app, const DataOptions& dopt, const PriorOptions& popt, const ChainOptions& copt,
                 const ValidateOptions& v, const CommonOptions& c)
{
  const auto spec = make_spec(dopt, c.seed);
  if (spec.model != ModelKind::linear) throw UsageError("the enumeration oracle needs the linear model");
  if (spec.p > oracle::kEnumerationCap)
    throw UsageError("p = " + std::to_string(spec.p) + " exceeds the enumeration cap of " +
                     std::to_string(oracle::kEnumerationCap));
  const Dataset d = synthesize(spec, c.seed, false);
  const auto h = make_hyper(popt, spec.n, spec.p);
  SamplerConfig cfg;
  cfg.algorithm = parse_algorithm(copt.algorithm);
  cfg.kernel.kind = parse_kernel(copt.kernel, spec.model, cfg.algorithm);
  cfg.kernel.inner_steps = copt.inner_steps;
  cfg.total_iters = copt.iters;
  cfg.record_every = std::max<Index>(1, copt.iters);
  if ((cfg.algorithm == Algorithm::sa_sgld || cfg.kernel.kind == KernelKind::sgld) && !h.B)
    throw UsageError("sa_sgld and the sgld kernel need --batch-size");
  try {
    check_compatible(cfg, spec.model, h);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("incompatible configuration: ") + e.what());
  }
  const double tol = v.tolerance.value_or(cfg.algorithm == Algorithm::exact ? 0.02 : 0.05);
  const Index burn_in = copt.burn_in.value_or(std::min<Index>(1000, copt.iters / 10));

  const auto table = oracle::enumerate_posterior(d.train, h, oracle::kEnumerationCap, c.threads);
  const LinearModel model(d.train);
  RunOptions<LinearModel> opts;
  opts.burn_in = burn_in;
  opts.record_series = false;
  const Trace trace = run_chain(cfg, model, h, rng::Stream(c.seed).child("validate"), opts);

  bool pass = trace.summary.post_burn_in > 0;
  const fs::path dir = c.out;
  auto out = io::open_out(dir / "validate.csv");
  io::CsvWriter w(out);
  w.header({"j", "true_delta", "oracle", "empirical", "abs_diff", "pass"});
  std::cout << "  j  true  oracle     empirical  |diff|\n";
  for (Index j = 0; j < spec.p; ++j) {
    const double o = table.inclusion[j];
    const double e = trace.summary.post_burn_in > 0 ? trace.summary.inclusion_frequency[j] : 0.0;
    const double diff = std::abs(o - e);
    const bool is_true = d.truth->delta[j];
    bool ok = trace.summary.post_burn_in > 0;
    if (cfg.algorithm == Algorithm::exact)
      ok = ok && diff <= tol;
    else
      ok = ok && (is_true ? diff <= tol : e <= v.null_tolerance);
    pass = pass && ok;
    w.row(j, is_true ? 1 : 0, o, e, diff, ok ? 1 : 0);
    char line[128];
    std::snprintf(line, sizeof line, "%3zu  %4d  %.6f  %.6f  %.6f%s\n", j, is_true ? 1 : 0, o, e, diff, ok ? "" : "  FAIL");
    std::cout << line;
  }
  write_effective_config(app, dir);
  if (trace.summary.post_burn_in == 0) std::cout << "no post-burn-in iterations\n";
  std::cout << (pass ? "PASS" : "FAIL") << " (" << to_string(cfg.algorithm) << ", tolerance " << tol << ")\n";
  if (!pass) throw ValidationFailure("oracle comparison failed");
  return kOk;
}

// ---------------------------------------------------------------- reproduce

struct ReproduceOptions
{
  std::string figure;
  std::string scale = "desk";
  std::optional<Index> replications;
  std::optional<Index> niter;
  std::optional<Index> lag;
};

struct Panel
{
  std::string subdir;
  ExperimentConfig cfg;
};

std::string varrho_tag(double v)
{
  std::string s = io::fmt(v);
  for (auto& ch : s)
    if (ch == '.') ch = '_';
  return s;
}

std::vector<Panel> figure_panels(const ReproduceOptions& r, const CommonOptions& c)
{
  const bool paper = r.scale == "paper";
  ExperimentConfig base;
  base.seed = c.seed;
  base.threads = c.threads;
  std::vector<Panel> panels;

  auto logistic = [&](ExperimentConfig& e) {
    e.model = ModelKind::logistic;
    e.kernel = KernelKind::mala;
    e.B = 100;
    e.lasso_init = true;
  };

  const std::string& f = r.figure;
  if (f == "mixing_lm") {
    base.kind = ExperimentKind::mixing_vs_p;
    base.p_grid = paper ? std::vector<Index>{500, 1000, 2000, 4000} : std::vector<Index>{200, 400, 800};
    base.replications = 50;
    for (double v : paper ? std::vector<double>{0.0, 0.9} : std::vector<double>{0.0}) {
      Panel pn{paper ? "varrho" + varrho_tag(v) : "", base};
      pn.cfg.varrho_grid = {v};
      panels.push_back(pn);
    }
  } else if (f == "relerr_lm" || f == "relerr_logistic") {
    base.kind = ExperimentKind::relative_error;
    if (f == "relerr_logistic") {
      logistic(base);
      base.algorithms = {Algorithm::async, Algorithm::sa_sgld};
    }
    base.p_grid = paper ? std::vector<Index>{1000, 5000} : std::vector<Index>{200, 400};
    base.varrho_grid = {0.0, 0.9};
    base.replications = paper ? 50 : 5;
    panels.push_back({"", base});
  } else if (f == "paths_lm" || f == "paths_logistic") {
    base.kind = ExperimentKind::pen_loglik_paths;
    if (f == "paths_logistic") {
      logistic(base);
      base.algorithms = {Algorithm::exact, Algorithm::async, Algorithm::sa_sgld};
    }
    base.replications = paper ? 50 : (f == "paths_lm" ? 10 : 5);
    for (Index p : paper ? std::vector<Index>{1000, 5000} : std::vector<Index>{400})
      for (double v : paper ? std::vector<double>{0.0, 0.9} : std::vector<double>{0.0}) {
        Panel pn{"p" + std::to_string(p) + "_varrho" + varrho_tag(v), base};
        pn.cfg.p_grid = {p};
        pn.cfg.varrho_grid = {v};
        panels.push_back(pn);
      }
  } else if (f == "runtime") {
    base.kind = ExperimentKind::runtime_table;
    logistic(base);
    base.algorithms = {Algorithm::exact, Algorithm::async, Algorithm::sa_sgld};
    base.p_grid = paper ? std::vector<Index>{1000, 2000, 5000} : std::vector<Index>{1000};
    base.replications = paper ? 10 : 3;
    base.threads = 1;
    panels.push_back({"", base});
  } else {
    throw UsageError("unknown figure " + f);
  }
  for (auto& pn : panels) {
    if (r.replications) pn.cfg.replications = *r.replications;
    if (r.niter) pn.cfg.niter = *r.niter;
    if (r.lag) pn.cfg.lag = *r.lag;
  }
  return panels;
}

std::string plot_script(const std::string& figure, const ExperimentConfig& cfg)
{
  std::ostringstream s;
  s << "# gnuplot script; run from this directory\n"
    << "set datafile separator ','\n"
    << "set terminal pngcairo size 900,600\n"
    << "set output '" << figure << ".png'\n"
    << "set key outside\n";
  std::string algs;
  for (auto a : cfg.algorithms) algs += (algs.empty() ? "" : " ") + std::string(to_string(a));
  switch (cfg.kind) {
  case ExperimentKind::mixing_vs_p:
    s << "set xlabel 'p'\nset ylabel 't_mix'\n"
      << "plot 'trend.csv' every ::1 using 1:3:4 with yerrorlines title 't_mix (eps = " << cfg.epsilon << ")'\n";
    break;
  case ExperimentKind::relative_error:
    s << "set xlabel 'replication'\nset ylabel 'relative error'\n"
      << "plot for [a in '" << algs << "'] 'relerr.csv' every ::1 using 4:(strcol(3) eq a ? $5 : 1/0) "
      << "with points title a\n";
    break;
  case ExperimentKind::pen_loglik_paths:
    s << "set xlabel 'iteration'\nset ylabel 'penalized test log-likelihood'\n"
      << "plot for [a in '" << algs << "'] 'paths.csv' every ::1 using 2:(strcol(1) eq a ? $3 : 1/0) "
      << "with lines title a\n";
    break;
  case ExperimentKind::runtime_table:
    s << "set xlabel 'p'\nset ylabel 'seconds'\nset logscale y\n"
      << "plot for [a in '" << algs << "'] 'runtime.csv' every ::1 using 2:(strcol(1) eq a ? $3 : 1/0):4 "
      << "with yerrorbars title a\n";
    break;
  }
  return s.str();
}

std::string panel_fingerprint(const ExperimentConfig& cfg)
{
  std::string s;
  for (const auto& [k, v] : detail::report_header(cfg)) s += k + "=" + v + ";";
  return s;
}

int cmd_reproduce(const CLI::App& app, const ReproduceOptions& r, const CommonOptions& c)
{
  if (r.scale != "desk" && r.scale != "paper") throw UsageError("--scale must be desk or paper");
  const auto panels = figure_panels(r, c);
  const fs::path root = fs::path(c.out) / r.figure;
  const fs::path marker = root / "RESUME";
  if (fs::exists(marker)) std::cout << "resuming an interrupted run in " << root.string() << '\n';
  {
    auto m = io::open_out(marker);
    m << "# present while a run is in progress or after it failed; completed panels carry a 'done' file\n";
  }
  write_effective_config(app, root);

  bool all_linear = true;
  for (const auto& pn : panels) {
    const fs::path dir = root / pn.subdir;
    const std::string fp = panel_fingerprint(pn.cfg);
    if (fs::exists(dir / "done")) {
      auto in = io::open_in(dir / "done");
      std::string prev((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (prev == fp) {
        std::cout << "skipping completed panel " << (pn.subdir.empty() ? r.figure : pn.subdir) << '\n';
        continue;
      }
    }
    std::cout << "running " << r.figure << (pn.subdir.empty() ? "" : " / " + pn.subdir) << " (" << r.scale
              << " scale)\n";
    for (const auto& [k, v] : detail::report_header(pn.cfg)) std::cout << "  " << k << " = " << v << '\n';
    const auto rep = run_experiment(pn.cfg);
    for (const auto& w : rep.warnings) std::cout << "  warning: " << w << '\n';
    const auto files = write_report(rep, dir);
    {
      auto gp = io::open_out(dir / "plot.gp");
      gp << plot_script(r.figure, pn.cfg);
    }
    {
      auto mf = io::open_out(dir / "manifest.txt");
      mf << "figure = " << r.figure << "\nscale = " << r.scale << "\nseed = " << c.seed << '\n';
      for (const auto& f : files) mf << "fnv1a64." << f.filename().string() << " = " << io::file_hash(f) << '\n';
    }
    if (rep.trend) {
      const auto& t = *rep.trend;
      std::cout << "  trend: slope " << t.slope << ", quadratic " << t.quad << " +- " << t.quad_se << " -> "
                << (t.linear() ? "linear" : "not linear") << '\n';
    }
    for (const auto& rt : rep.runtime)
      std::cout << "  " << to_string(rt.algorithm) << " p=" << rt.p << ": " << rt.mean_s << " +- " << rt.sd_s << " s\n";
    auto done = io::open_out(dir / "done");
    done << fp;
    all_linear = all_linear && (!rep.trend || rep.trend->linear());
  }
  fs::remove(marker);
  (void)all_linear;
  std::cout << "outputs in " << root.string() << '\n';
  return kOk;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Spike-and-slab screening samplers: data generation, sampling, coupling, validation, reproduction"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  CommonOptions common;
  DataOptions data;
  PriorOptions prior;
  ChainOptions chain;
  MixOptions mix;
  ValidateOptions val;
  ReproduceOptions rep;
  std::string data_dir;

  auto* gen = app.add_subcommand("generate", "simulate X, y and the true signal");
  add_config_option(gen);
  add_data(gen, data);
  add_common(gen, common, false);

  auto* sample = app.add_subcommand("sample", "run one chain of the exact, asynchronous or SA-SGLD sampler");
  add_config_option(sample);
  add_data(sample, data);
  add_prior(sample, prior);
  add_chain(sample, chain);
  add_common(sample, common, false);
  sample->add_option("--data", data_dir, "directory with X.csv and y.csv from 'generate' (default: simulate from the flags)");

  DataOptions mix_data;
  auto* mixc = app.add_subcommand("mix", "estimate the mixing time with lag-L coupled chains (linear, exact sampler)");
  add_config_option(mixc);
  add_data(mixc, mix_data);
  add_prior(mixc, prior);
  add_chain(mixc, chain);
  add_common(mixc, common, true);
  mixc->add_option("--lag", mix.lag, "lag L between the coupled chains");
  mixc->add_option("--replications", mix.replications, "number of coupled replicas R (simulations: 50)");
  mixc->add_option("--max-iters", mix.max_iters, "censoring horizon for the meeting time");
  mixc->add_option("--epsilon", mix.epsilon, "total-variation level defining t_mix");
  mixc->add_flag("--coordinatewise", mix.coordinatewise, "couple the spike/slab blocks one coordinate at a time");

  DataOptions val_data;
  val_data.p = 5;
  val_data.n = 50;
  val_data.s_star = 2;
  PriorOptions val_prior;
  val_prior.J = 1;
  ChainOptions val_chain;
  val_chain.iters = 100000;
  auto* valc = app.add_subcommand("validate", "compare sampler marginals with the exact enumeration (p <= 20)");
  add_config_option(valc);
  add_data(valc, val_data);
  add_prior(valc, val_prior);
  add_chain(valc, val_chain);
  add_common(valc, common, true);
  valc->add_option("--tolerance", val.tolerance, "max |marginal difference| (default 0.02 exact, 0.05 otherwise)");
  valc->add_option("--null-tolerance", val.null_tolerance, "max null-coordinate marginal for approximate samplers");

  auto* repc = app.add_subcommand("reproduce", "run a figure or table protocol end to end");
  add_config_option(repc);
  repc->add_option("figure", rep.figure, "figure to reproduce")->required()->check(CLI::IsMember(kFigures));
  repc->add_option("--scale", rep.scale, "desk (scaled-down grids) or paper")->check(CLI::IsMember({"desk", "paper"}));
  repc->add_option("--replications", rep.replications, "override the replication count");
  repc->add_option("--niter", rep.niter, "override Niter = max(2000, p - 2000)");
  repc->add_option("--lag", rep.lag, "override the coupling lag (mixing_lm)");
  add_common(repc, common, true);

  try {
    std::vector<std::string> args;
    try {
      args = expand_config(app, argc, argv);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsage;
    }
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(*gen, data, common);
    if (*sample) return cmd_sample(*sample, data, prior, chain, common, data_dir);
    if (*mixc) return cmd_mix(*mixc, mix_data, prior, chain, mix, common);
    if (*valc) return cmd_validate(*valc, val_data, val_prior, val_chain, val, common);
    if (*repc) return cmd_reproduce(*repc, rep, common);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationFailure& e) {
    std::cerr << "validation failed: " << e.what() << '\n';
    return kValidation;
  } catch (const io::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
