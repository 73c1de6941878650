#include <doctest.h>

#include <Eigen/Core>
#include <cmath>

#include "fgof/gof.hpp"
#include "fgof/rng.hpp"
#include "fgof/simgen.hpp"

using fgof::GofConfig;
using fgof::GofResult;
using fgof::golden_multipliers;
using fgof::run_gof;
using fgof::run_gof_simple;

namespace {

// low-rank covariate: two sine components with random amplitudes
fgof::FunctionalSample<double> rank2_covariate(Eigen::Index n, const fgof::Grid<double>& g,
                                               std::uint64_t seed) {
  Eigen::MatrixXd v(n, g.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    fgof::Rng rng = fgof::Rng::substream(seed, i);
    const double a = rng.normal(), b = rng.normal();
    for (Eigen::Index t = 0; t < g.size(); ++t) {
      const double u = g.nodes(t);
      v(i, t) = a * std::sin(M_PI * u) + 0.4 * b * std::sin(2.0 * M_PI * u);
    }
  }
  return fgof::center(fgof::make_sample(g, v)).first;
}

Eigen::MatrixXd product_surface(const fgof::Grid<double>& gx, const fgof::Grid<double>& gy) {
  Eigen::MatrixXd s(gx.size(), gy.size());
  for (Eigen::Index i = 0; i < gx.size(); ++i)
    for (Eigen::Index j = 0; j < gy.size(); ++j)
      s(i, j) = (1.0 + gx.nodes(i)) * std::cos(M_PI * gy.nodes(j));
  return s;
}

}  // namespace

TEST_CASE("golden multipliers") {
  fgof::Rng rng(7);
  const double sqrt5 = std::sqrt(5.0);
  const double lo = (1.0 - sqrt5) / 2.0, hi = (1.0 + sqrt5) / 2.0;

  Eigen::VectorXd v = golden_multipliers(200'000, rng);
  for (Eigen::Index i = 0; i < 200; ++i) CHECK((v(i) == lo || v(i) == hi));

  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double third = (v.array().pow(3)).mean();
  CHECK(std::abs(mean) <= 0.01);
  CHECK(std::abs(var - 1.0) <= 0.02);
  CHECK(std::abs(third - 1.0) <= 0.05);  // analytic third moment is exactly one
}

TEST_CASE("pvalue tie conventions") {
  Eigen::VectorXd boot(4);
  boot << 1.0, 2.0, 3.0, 4.0;
  CHECK(fgof::pvalue(0.5, boot) == doctest::Approx(1.0));
  CHECK(fgof::pvalue(9.0, boot) == doctest::Approx(0.0));
  CHECK(fgof::pvalue(2.0, boot) == doctest::Approx(0.75));  // ties count as exceedances
  Eigen::VectorXd equal = Eigen::VectorXd::Constant(5, 1.5);
  CHECK(fgof::pvalue(1.5, equal) == doctest::Approx(1.0));
}

TEST_CASE("run_gof on an exactly linear sample") {
  auto gx = fgof::make_grid(0.0, 1.0, 41);
  auto gy = fgof::make_grid(2.0, 3.0, 31);
  auto x = rank2_covariate(30, gx, 5);
  auto y = fgof::apply_linear(x, product_surface(gx, gy), gy);

  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.n_boot = 50;
  cfg.seed = 11;
  GofResult res = run_gof(x, y, cfg);
  CHECK(res.statistic <= 1e-18);
  CHECK(res.p == 2);  // the covariate really is two-dimensional
}

TEST_CASE("run_gof is deterministic and thread-count independent") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 41);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 40, 123);
  auto e = fgof::simulate(sc.error, sc.grid_y, 40, 456);

  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::L1s;
  cfg.estimator.lambda_policy = fgof::LambdaPolicy::OneSe;
  cfg.n_boot = 64;
  cfg.seed = 99;

  cfg.threads = 1;
  GofResult a = run_gof(x, e, cfg);
  GofResult b = run_gof(x, e, cfg);
  cfg.threads = 4;
  GofResult c = run_gof(x, e, cfg);

  CHECK(a.statistic == b.statistic);
  CHECK(a.statistic == c.statistic);
  CHECK((a.boot_stats - b.boot_stats).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.boot_stats - c.boot_stats).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.p_value == c.p_value);
  CHECK(a.lambda == c.lambda);
  CHECK(a.diagnostics.adot_evaluations == 1);
}

TEST_CASE("empty selection degenerates to the no-effects simple test") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 41);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 35, 1);
  auto e = fgof::simulate(sc.error, sc.grid_y, 35, 2);  // response independent of x

  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::L1s;
  cfg.estimator.lambda_policy = fgof::LambdaPolicy::Fixed;
  cfg.estimator.lambda = 1e6;  // nothing survives selection
  cfg.n_boot = 40;
  cfg.seed = 3;

  GofResult composite = run_gof(x, e, cfg);
  CHECK(composite.selected.empty());
  CHECK(composite.p_tilde == composite.p);

  GofConfig simple_cfg = cfg;
  simple_cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  GofResult simple = run_gof_simple(x, e, Eigen::MatrixXd::Zero(x.m(), e.m()), simple_cfg);
  CHECK(composite.statistic == simple.statistic);
  CHECK((composite.boot_stats - simple.boot_stats).cwiseAbs().maxCoeff() == 0.0);
  CHECK(composite.p_value == simple.p_value);
}

TEST_CASE("hat-matrix fast path equals explicit refitting") {
  fgof::Rng master(17);
  for (int rep = 0; rep < 6; ++rep) {
    const Eigen::Index n = 12 + 3 * rep;
    Eigen::MatrixXd x(n, 3), b0(3, 2);
    fgof::Rng rng = fgof::Rng::substream(77, rep);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) b0(i, j) = rng.normal();
    Eigen::MatrixXd y = x * b0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < 2; ++j) y(i, j) += 0.3 * rng.normal();

    for (bool l1s : {false, true}) {
      fgof::Fit fit = l1s ? fgof::fit_l1s(x, y, 0.05) : fgof::fit_fpcr(x, y);
      REQUIRE(fit.hat.has_value());
      // one bootstrap response
      Eigen::VectorXd v = golden_multipliers(n, rng);
      Eigen::MatrixXd y_star = x * fit.coef + (fit.residuals.array().colwise() * v.array()).matrix();
      y_star.rowwise() -= y_star.colwise().mean();

      const Eigen::MatrixXd fast = y_star - (*fit.hat) * y_star;
      // slow path: refit least squares on the frozen selection
      std::vector<Eigen::Index> cols = fit.selected_rows;
      Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) xs.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
      fgof::Fit refit = fgof::fit_fpcr(xs, y_star);
      CHECK((fast - refit.residuals).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("scale equivariance of the unpenalized statistic") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 41);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 30, 21);
  auto e = fgof::simulate(sc.error, sc.grid_y, 30, 22);

  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.n_boot = 8;
  cfg.seed = 23;
  GofResult base = run_gof(x, e, cfg);
  for (double c : {0.5, 3.0}) {
    fgof::FunctionalSample<double> y2 = e;
    y2.values *= c;
    GofResult scaled = run_gof(x, y2, cfg);
    CHECK(scaled.statistic == doctest::Approx(c * c * base.statistic).epsilon(1e-6));
  }
}

TEST_CASE("run_gof_simple with the true kernel accepts") {
  auto gx = fgof::make_grid(0.0, 1.0, 41);
  auto gy = fgof::make_grid(2.0, 3.0, 31);
  auto x = rank2_covariate(40, gx, 31);
  Eigen::MatrixXd beta = product_surface(gx, gy);
  auto y = fgof::apply_linear(x, beta, gy);

  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.n_boot = 100;
  cfg.seed = 37;
  GofResult res = run_gof_simple(x, y, beta, cfg);
  CHECK(res.statistic <= 1e-18);

  // and the no-effects test on the same data rejects emphatically
  GofResult reject = run_gof_simple(x, y, Eigen::MatrixXd::Zero(gx.size(), gy.size()), cfg);
  CHECK(reject.p_value <= 0.01);
}

TEST_CASE("no-effects simple test holds its size (reference 0.042)") {
  // single-domain setting, unpenalized estimator; replicates beyond the
  // reference protocol sharpen the verdict, the tolerance stays the same
  fgof::StudyConfig cfg;
  cfg.scenario = fgof::make_scenario(fgof::ScenarioId::S1, true);
  cfg.mode = fgof::StudyMode::Simple;
  cfg.hypotheses = {"ne"};
  cfg.sample_sizes = {50};
  cfg.replicates = 2000;
  cfg.n_boot = 500;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.seed = 2718;
  const auto rows = fgof::run_study(cfg);
  CHECK(rows.at(0).value >= 0.042 - 0.025);
  CHECK(rows.at(0).value <= 0.042 + 0.025);
}

TEST_CASE("statistic responds monotonically to quadratic deviations") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, true, 41);
  const Eigen::Index n = 40;
  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.n_boot = 1;
  double prev = -1.0;
  for (double delta : {0.025, 0.075, 0.15}) {
    double mean_stat = 0;
    for (int m = 0; m < 12; ++m) {
      auto x = fgof::simulate(sc.covariate, sc.grid_x, n, 1000 + m);
      auto e = fgof::simulate(sc.error, sc.grid_y, n, 2000 + m);
      fgof::Hypothesis h;
      h.deviation = {fgof::DeviationFamily::Quadratic, delta, 1};
      auto y = fgof::generate_response(x, e, h, sc);
      cfg.seed = 3000 + m;
      mean_stat += run_gof_simple(x, y, Eigen::MatrixXd::Zero(x.m(), y.m()), cfg).statistic / 12.0;
    }
    CHECK(mean_stat > prev);
    prev = mean_stat;
  }
}

TEST_CASE("ridge and lasso estimator kinds drive the bootstrap correctly") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 41);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 30, 61);
  fgof::FunctionalSample<double> y = fgof::simulate(sc.error, sc.grid_y, 30, 62);
  y.values += fgof::apply_linear(x, fgof::kernel_surface(sc), sc.grid_y).values;

  GofConfig base;
  base.n_boot = 40;
  base.seed = 63;

  SUBCASE("ridge at zero penalty reproduces the unpenalized run exactly") {
    GofConfig cfg = base;
    cfg.estimator.kind = fgof::EstimatorKind::Ridge;
    cfg.estimator.alpha = 0.0;
    cfg.estimator.lambda_policy = fgof::LambdaPolicy::Fixed;
    cfg.estimator.lambda = 0.0;
    GofResult ridge = run_gof(x, y, cfg);
    cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
    GofResult plain = run_gof(x, y, cfg);
    CHECK(ridge.statistic == plain.statistic);
    CHECK((ridge.boot_stats - plain.boot_stats).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("ridge at positive penalty is deterministic and sane") {
    GofConfig cfg = base;
    cfg.estimator.kind = fgof::EstimatorKind::Ridge;
    cfg.estimator.alpha = 0.0;
    cfg.estimator.lambda_policy = fgof::LambdaPolicy::Fixed;
    cfg.estimator.lambda = 2.5;
    GofResult a = run_gof(x, y, cfg);
    GofResult b = run_gof(x, y, cfg);
    CHECK(a.statistic == b.statistic);
    CHECK(a.p_value >= 0.0);
    CHECK(a.p_value <= 1.0);
    CHECK(a.boot_stats.allFinite());
    CHECK(a.lambda == 2.5);
  }

  SUBCASE("the pure lasso refits each replicate and approaches the hat path as the penalty vanishes") {
    GofConfig cfg = base;
    cfg.estimator.kind = fgof::EstimatorKind::Lasso;
    cfg.estimator.lambda_policy = fgof::LambdaPolicy::Fixed;
    cfg.estimator.lambda = 1e-8;  // essentially least squares, but down the refit path
    GofResult lasso = run_gof(x, y, cfg);
    cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
    GofResult plain = run_gof(x, y, cfg);
    REQUIRE(lasso.selected.size() == static_cast<std::size_t>(lasso.p));
    CHECK(lasso.statistic == doctest::Approx(plain.statistic).epsilon(1e-4));
    for (Eigen::Index b = 0; b < lasso.boot_stats.size(); ++b)
      CHECK(lasso.boot_stats(b) ==
            doctest::Approx(plain.boot_stats(b)).epsilon(1e-3).scale(plain.statistic));
  }
}

TEST_CASE("bootstrap replicates are insensitive to replicate reordering") {
  // replicate k draws from substream (seed, k); computing a subset of the
  // replicates gives exactly the matching prefix values
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 31);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 25, 51);
  auto e = fgof::simulate(sc.error, sc.grid_y, 25, 52);
  GofConfig cfg;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.seed = 53;
  cfg.n_boot = 16;
  GofResult small = run_gof(x, e, cfg);
  cfg.n_boot = 64;
  GofResult big = run_gof(x, e, cfg);
  CHECK((big.boot_stats.head(16) - small.boot_stats).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config validation") {
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 21);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 10, 1);
  auto e = fgof::simulate(sc.error, sc.grid_y, 10, 2);
  GofConfig cfg;
  cfg.n_boot = 0;
  CHECK_THROWS_AS(run_gof(x, e, cfg), std::invalid_argument);
  cfg.n_boot = 10;
  cfg.ev_threshold_x = 1.5;
  CHECK_THROWS_AS(run_gof(x, e, cfg), std::invalid_argument);
  cfg.ev_threshold_x = 0.99;
  auto e_short = fgof::simulate(sc.error, sc.grid_y, 9, 2);
  CHECK_THROWS_AS(run_gof(x, e_short, cfg), std::invalid_argument);
  // beta0 off the product grid
  CHECK_THROWS_AS(run_gof_simple(x, e, Eigen::MatrixXd::Zero(3, 3), cfg), std::invalid_argument);
}
