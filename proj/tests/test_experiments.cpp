#include "spikeslab/experiments.hpp"
#include "spikeslab/io.hpp"
#include "spikeslab/lasso.hpp"
#include "spikeslab/synthetic.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace spikeslab;

namespace fs = std::filesystem;

namespace {

ChainState state_at(Index it, double t0, bool on)
{
  ChainState s;
  s.iteration = it;
  s.theta = ParamVector(2);
  s.theta << t0, 1.0;
  s.delta = SparsityVector::from_bits({on ? 1 : 0, 0});
  return s;
}

fs::path scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("spikeslab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

} // namespace

TEST(Experiments, RelativeErrorAveragesAfterBurnIn)
{
  ParamVector star(2);
  star << 2.0, 0.0;
  const std::vector<ChainState> states{state_at(0, 100.0, true), state_at(10, 2.0, true), state_at(20, 3.0, true),
                                       state_at(30, 5.0, false)};
  EXPECT_DOUBLE_EQ(relative_error(states, star, 0), (0.0 + 0.5 + 1.0) / 3.0);
  EXPECT_DOUBLE_EQ(relative_error(states, star, 20), 1.0);
  EXPECT_THROW(relative_error(states, star, 30), std::invalid_argument);
}

TEST(Experiments, TrendTestSeparatesLinearFromQuadratic)
{
  const std::vector<double> x{200, 400, 800, 1600};
  const std::vector<double> se{2, 2, 2, 2};
  const auto lin = trend_test(x, {20.5, 40.1, 79.8, 160.2}, se);
  EXPECT_TRUE(lin.linear());
  EXPECT_NEAR(lin.slope, 0.1, 0.005);

  std::vector<double> y;
  for (double v : x) y.push_back(1e-4 * v * v);
  const auto quad = trend_test(x, y, se);
  EXPECT_FALSE(quad.quad_negligible());
  EXPECT_FALSE(quad.linear());

  const auto flat = trend_test(x, {50, 48, 51, 47}, se);
  EXPECT_FALSE(flat.slope_positive() && flat.quad_negligible() && flat.slope > 3 * flat.slope_se);
  EXPECT_THROW(trend_test({1, 2}, {1, 2}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(trend_test({1, 1, 1}, {1, 2, 3}, {1, 1, 1}), std::invalid_argument);
}

TEST(Experiments, LassoSatisfiesOptimalityAndFindsSupport)
{
  SyntheticSpec spec;
  spec.n = 100;
  spec.p = 40;
  spec.s_star = 3;
  rng::Engine e(rng::Stream(1));
  const auto truth = generate_signal(spec, e);
  const auto d = generate_dataset(spec, truth.theta, rng::Stream(2));
  const LinearModel m(d);
  const double lambda = default_lasso_lambda(d);
  const auto fit = lasso_warm_start(m, lambda, 20000, 1e-12);
  EXPECT_TRUE(fit.converged) << fit.warning;

  std::vector<Index> all(40);
  for (Index j = 0; j < 40; ++j) all[j] = j;
  const Vector g = -m.grad(fit.theta, SparsityVector::full(40), all) / 100.0;
  EXPECT_LE(detail::kkt_violation(fit.theta, g, lambda), 1e-6);
  for (Index j = 0; j < 40; ++j) {
    if (truth.delta[j]) {
      EXPECT_TRUE(fit.support[j]) << j;
    }
  }
  EXPECT_LE(fit.support.count(), 15u);
}

TEST(Experiments, LassoAtLargeLambdaIsZero)
{
  const auto d = testutil::random_data(30, 5, 3);
  const LinearModel m(d);
  const auto fit = lasso_warm_start(m, 1e6);
  EXPECT_EQ(fit.support.count(), 0u);
  EXPECT_DOUBLE_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(0.5, 1.0), 0.0);
}

TEST(Experiments, GeneratorDesignCorrelation)
{
  SyntheticSpec spec;
  spec.n = 4000;
  spec.p = 6;
  spec.s_star = 2;
  spec.varrho = 0.9;
  rng::Engine e(rng::Stream(4));
  const Matrix X = generate_design(spec, e);
  for (Eigen::Index j = 0; j + 1 < 6; ++j) {
    const double c = X.col(j).dot(X.col(j + 1)) / std::sqrt(X.col(j).squaredNorm() * X.col(j + 1).squaredNorm());
    EXPECT_NEAR(c, 0.9, 0.02);
  }
  EXPECT_NEAR(X.col(5).squaredNorm() / 4000.0, 1.0, 0.1);

  spec.n = 50;
  spec.normalize_columns = true;
  rng::Engine e2(rng::Stream(4));
  const Matrix Xn = generate_design(spec, e2);
  for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(Xn.col(j).squaredNorm(), 50.0, 1e-9);
}

TEST(Experiments, GeneratorSignalAndResponse)
{
  SyntheticSpec spec;
  spec.n = 60;
  spec.p = 30;
  spec.s_star = 7;
  rng::Engine e(rng::Stream(5));
  const auto s = generate_signal(spec, e);
  EXPECT_EQ(s.delta.count(), 7u);
  for (Index j = 0; j < 30; ++j) {
    const double a = std::abs(s.theta[j]);
    if (s.delta[j]) {
      EXPECT_GE(a, 6.0);
      EXPECT_LE(a, 7.0);
    } else {
      EXPECT_EQ(a, 0.0);
    }
  }
  spec.model = ModelKind::logistic;
  const auto d = generate_dataset(spec, s.theta, rng::Stream(6));
  for (Eigen::Index i = 0; i < d.y.size(); ++i) EXPECT_TRUE(d.y[i] == 0.0 || d.y[i] == 1.0);
  const auto again = generate_dataset(spec, s.theta, rng::Stream(6));
  EXPECT_EQ(d.X, again.X);
  EXPECT_EQ(d.y, again.y);

  spec.s_star = 31;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.s_star = 3;
  spec.varrho = 1.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Experiments, RelativeErrorRunIsThreadIndependent)
{
  ExperimentConfig cfg;
  cfg.p_grid = {40};
  cfg.s_star = 3;
  cfg.J = 10;
  cfg.replications = 3;
  cfg.niter = 200;
  cfg.burn_in = 100;
  cfg.seed = 7;
  cfg.threads = 1;
  const auto a = run_experiment(cfg);
  cfg.threads = 3;
  const auto b = run_experiment(cfg);
  ASSERT_EQ(a.metrics.size(), 6u);
  ASSERT_EQ(b.metrics.size(), 6u);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].relative_error, b.metrics[i].relative_error);
    EXPECT_EQ(a.metrics[i].true_selected, b.metrics[i].true_selected);
    EXPECT_EQ(a.metrics[i].replica, b.metrics[i].replica);
  }

  const auto da = scratch("report_a"), db = scratch("report_b");
  write_report(a, da);
  write_report(b, db);
  EXPECT_EQ(io::file_hash(da / "report.txt"), io::file_hash(db / "report.txt"));
}

TEST(Experiments, PathsNeedOnePanel)
{
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::pen_loglik_paths;
  cfg.p_grid = {40, 80};
  cfg.replications = 1;
  cfg.niter = 10;
  EXPECT_THROW(run_experiment(cfg), ConfigError);
  cfg.p_grid = {40};
  cfg.varrho_grid = {0.0, 0.5};
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(Experiments, CsvReadingAndHashing)
{
  EXPECT_EQ(io::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(io::fnv1a64("a"), 0xaf63dc4c8601ec8cull);

  const auto dir = scratch("csv");
  {
    std::ofstream f(dir / "ok.csv");
    f << "x,y\n1,2\n3.5,-4\n";
  }
  const auto rows = io::read_numeric_csv(dir / "ok.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (std::vector<double>{3.5, -4.0}));
  {
    std::ofstream f(dir / "ragged.csv");
    f << "1,2\n3\n";
  }
  EXPECT_THROW(io::read_numeric_csv(dir / "ragged.csv"), io::IoError);
  EXPECT_THROW(io::read_numeric_csv(dir / "missing.csv"), io::IoError);
  {
    std::ofstream f(dir / "empty.txt");
  }
  EXPECT_EQ(io::file_hash(dir / "empty.txt"), "cbf29ce484222325");
}
