#ifndef FGOF_GOF_HPP
#define FGOF_GOF_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fgof/fpc.hpp"
#include "fgof/functional_sample.hpp"
#include "fgof/parallel.hpp"
#include "fgof/pcvm.hpp"
#include "fgof/regfit.hpp"
#include "fgof/rng.hpp"

namespace fgof {

/// Configuration of the goodness-of-fit run: explained-variance targets for
/// the two truncations, bootstrap size, estimator, and the seed every random
/// draw derives from.
struct GofConfig {
  double ev_threshold_x = 0.99;
  double ev_threshold_y = 0.99;
  int n_boot = 1000;
  EstimatorSpec estimator;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = library default

  void validate() const {
    if (n_boot < 1) throw std::invalid_argument("GofConfig: need at least one bootstrap replicate");
    if (!(ev_threshold_x > 0) || ev_threshold_x > 1 || !(ev_threshold_y > 0) || ev_threshold_y > 1)
      throw std::invalid_argument("GofConfig: EV thresholds must lie in (0, 1]");
    estimator.validate();
  }
};

struct GofDiagnostics {
  int adot_evaluations = 0;  // stays at one per run: the angle matrix is shared
  double lambda_cv = std::numeric_limits<double>::quiet_NaN();
  double lambda_1se = std::numeric_limits<double>::quiet_NaN();
};

/// Test outcome: the statistic, its bootstrap replicates in replicate order,
/// the Monte Carlo p-value, the truncations, and what the estimator selected.
struct GofResult {
  double statistic = 0.0;
  Eigen::VectorXd boot_stats;
  double p_value = 1.0;
  Eigen::Index p = 0;        // covariate truncation from the EV rule
  Eigen::Index q = 0;        // response truncation from the EV rule
  Eigen::Index p_tilde = 0;  // covariate dimension carrying the statistic
  std::vector<Eigen::Index> selected;  // FPC indices kept by the estimator
  double lambda = 0.0;
  GofDiagnostics diagnostics;
};

/// Two-point golden-section multipliers: (1 - sqrt 5)/2 with probability
/// (5 + sqrt 5)/10, else (1 + sqrt 5)/2. Zero mean, unit variance, unit third
/// moment.
inline Eigen::VectorXd golden_multipliers(Eigen::Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("golden_multipliers: need n >= 1");
  const double sqrt5 = std::sqrt(5.0);
  const double lo = (1.0 - sqrt5) / 2.0;
  const double hi = (1.0 + sqrt5) / 2.0;
  const double p_lo = (5.0 + sqrt5) / 10.0;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform01() < p_lo ? lo : hi;
  return v;
}

/// Exceedance proportion #{b : stat <= boot_b} / B; ties count as exceedances.
inline double pvalue(double stat, const Eigen::VectorXd& boot_stats) {
  if (boot_stats.size() < 1) throw std::invalid_argument("pvalue: empty bootstrap sample");
  return static_cast<double>((boot_stats.array() >= stat).count()) /
         static_cast<double>(boot_stats.size());
}

namespace detail {

struct TruncatedScores {
  FpcBasis<double> basis_x, basis_y;
  Eigen::MatrixXd x_scores, y_scores;  // n x p, n x q
  Eigen::Index p = 0, q = 0;
};

inline TruncatedScores center_and_truncate(const FunctionalSample<double>& x,
                                           const FunctionalSample<double>& y, double ev_x,
                                           double ev_y) {
  if (x.n() != y.n()) throw std::invalid_argument("run_gof: X and Y sample sizes differ");
  if (x.n() < 3) throw std::invalid_argument("run_gof: need at least 3 observations");
  auto xc = center(x).first;
  auto yc = center(y).first;
  TruncatedScores ts;
  auto [bx, sx] = fpc(xc, std::min(xc.n(), xc.m()));
  auto [by, sy] = fpc(yc, std::min(yc.n(), yc.m()));
  ts.basis_x = std::move(bx);
  ts.basis_y = std::move(by);
  ts.p = truncate_by_ev(ts.basis_x, ev_x);
  ts.q = truncate_by_ev(ts.basis_y, ev_y);
  ts.x_scores = sx.scores.leftCols(ts.p);
  ts.y_scores = sy.scores.leftCols(ts.q);
  return ts;
}

inline Eigen::MatrixXd take_columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

constexpr std::uint64_t kCvStream = 0x8000000000000001ULL;

// Resolves the penalty for the estimator's policy; the unpenalized kind has none.
inline double resolve_lambda(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             const EstimatorSpec& spec, std::uint64_t seed, GofDiagnostics& diag) {
  if (spec.kind == EstimatorKind::Fpcr) return 0.0;
  if (spec.lambda_policy == LambdaPolicy::Fixed) return spec.lambda;
  Rng rng = Rng::substream(seed, kCvStream);
  CvCurve curve = select_lambda(x, y, spec, spec.cv_folds, rng);
  diag.lambda_cv = curve.lambda_cv;
  diag.lambda_1se = curve.lambda_1se;
  return spec.lambda_policy == LambdaPolicy::Cv ? curve.lambda_cv : curve.lambda_1se;
}

// Shared bootstrap loop. fitted holds the null-model fitted scores on the
// statistic columns; refit_residuals maps a centered bootstrap response to
// residual scores (hat-matrix product or a fresh lasso fit).
template <typename RefitFn>
Eigen::VectorXd bootstrap_statistics(const Eigen::MatrixXd& fitted, const Eigen::MatrixXd& residuals,
                                     const AdotMatrix<double>& angles, int n_boot,
                                     std::uint64_t seed, int threads, const RefitFn& refit_residuals) {
  const Eigen::Index n = residuals.rows();
  Eigen::VectorXd stats(n_boot);
  parallel_for(
      n_boot,
      [&](std::int64_t b) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(b));
        const Eigen::VectorXd v = golden_multipliers(n, rng);
        Eigen::MatrixXd y_star = fitted + (residuals.array().colwise() * v.array()).matrix();
        y_star.rowwise() -= y_star.colwise().mean();
        const Eigen::MatrixXd e_star = refit_residuals(y_star);
        stats(b) = pcvm_statistic(e_star, angles).value;
      },
      threads);
  return stats;
}

}  // namespace detail

/// Composite-hypothesis test: is the regression of Y on X compatible with a
/// linear integral operator with some unknown kernel?
///
/// Pipeline: center both samples, compute their FPC, truncate by explained
/// variance, fit the configured estimator on the score matrices, and compare
/// the statistic of the residual scores against golden-section wild-bootstrap
/// replicates. The angle matrix is built once from the selected covariate
/// scores and shared by all replicates; estimators with a hat matrix refit
/// through it, the pure lasso refits per replicate at the frozen penalty.
/// If the selection comes back empty the fit degenerates to the null model
/// and the statistic keeps the full covariate dimension.
inline GofResult run_gof(const FunctionalSample<double>& x, const FunctionalSample<double>& y,
                         const GofConfig& cfg) {
  cfg.validate();
  auto ts = detail::center_and_truncate(x, y, cfg.ev_threshold_x, cfg.ev_threshold_y);

  GofResult res;
  res.p = ts.p;
  res.q = ts.q;

  res.lambda = detail::resolve_lambda(ts.x_scores, ts.y_scores, cfg.estimator, cfg.seed,
                                      res.diagnostics);
  Fit fit = fit_estimator(ts.x_scores, ts.y_scores, cfg.estimator, res.lambda);
  res.selected = fit.selected_rows;

  const std::vector<Eigen::Index> stat_cols =
      fit.selected_rows.empty() ? detail::all_rows(ts.p) : fit.selected_rows;
  res.p_tilde = static_cast<Eigen::Index>(stat_cols.size());

  const Eigen::MatrixXd x_stat = detail::take_columns(ts.x_scores, stat_cols);
  const AdotMatrix<double> angles = adot(x_stat, -1.0, cfg.threads);
  res.diagnostics.adot_evaluations = 1;

  res.statistic = pcvm_statistic(fit.residuals, angles).value;

  const Eigen::MatrixXd fitted = ts.x_scores * fit.coef;
  if (fit.hat.has_value()) {
    const Eigen::MatrixXd& hat = *fit.hat;
    res.boot_stats = detail::bootstrap_statistics(
        fitted, fit.residuals, angles, cfg.n_boot, cfg.seed, cfg.threads,
        [&](const Eigen::MatrixXd& y_star) { return (y_star - hat * y_star).eval(); });
  } else {
    // no hat matrix: one lasso fit per replicate on the selected columns
    const Eigen::MatrixXd coef_sel = detail::take_rows(fit.coef, stat_cols);
    const double lambda = res.lambda;
    const double alpha = cfg.estimator.alpha;
    res.boot_stats = detail::bootstrap_statistics(
        fitted, fit.residuals, angles, cfg.n_boot, cfg.seed, cfg.threads,
        [&, lambda, alpha](const Eigen::MatrixXd& y_star) {
          Fit refit = fit_lasso(x_stat, y_star, lambda, alpha, &coef_sel);
          return refit.residuals;
        });
  }

  res.p_value = pvalue(res.statistic, res.boot_stats);
  return res;
}

/// Simple-hypothesis test against a fixed kernel surface beta0 given on the
/// product grid of X and Y (beta0 identically zero is the no-effects test).
/// The kernel is projected onto the truncated FPC tensor basis by double
/// quadrature; the bootstrap skips all estimation and recenters scaled
/// residuals around the fixed fitted scores.
inline GofResult run_gof_simple(const FunctionalSample<double>& x, const FunctionalSample<double>& y,
                                const Eigen::MatrixXd& beta0, const GofConfig& cfg) {
  cfg.validate();
  if (beta0.rows() != x.m() || beta0.cols() != y.m())
    throw std::invalid_argument("run_gof_simple: beta0 is not on the product grid of X and Y");
  auto ts = detail::center_and_truncate(x, y, cfg.ev_threshold_x, cfg.ev_threshold_y);

  GofResult res;
  res.p = ts.p;
  res.q = ts.q;

  // kernel scores b0_jk = <<beta0, psi_j x phi_k>> by double quadrature
  const Eigen::MatrixXd beta0_scores = ts.basis_x.eigenfunctions.topRows(ts.p) *
                                       x.grid.weights.asDiagonal() * beta0 *
                                       y.grid.weights.asDiagonal() *
                                       ts.basis_y.eigenfunctions.topRows(ts.q).transpose();

  // selection-capable estimators still pick the rows the statistic lives on
  std::vector<Eigen::Index> stat_cols = detail::all_rows(ts.p);
  if (cfg.estimator.kind == EstimatorKind::Lasso || cfg.estimator.kind == EstimatorKind::L1s) {
    res.lambda = detail::resolve_lambda(ts.x_scores, ts.y_scores, cfg.estimator, cfg.seed,
                                        res.diagnostics);
    Fit selector = fit_lasso(ts.x_scores, ts.y_scores, res.lambda, 1.0);
    res.selected = selector.selected_rows;
    if (!selector.selected_rows.empty()) stat_cols = selector.selected_rows;
  }
  res.p_tilde = static_cast<Eigen::Index>(stat_cols.size());

  const Eigen::MatrixXd x_stat = detail::take_columns(ts.x_scores, stat_cols);
  const Eigen::MatrixXd b0 = detail::take_rows(beta0_scores, stat_cols);
  const AdotMatrix<double> angles = adot(x_stat, -1.0, cfg.threads);
  res.diagnostics.adot_evaluations = 1;

  const Eigen::MatrixXd fitted = x_stat * b0;
  const Eigen::MatrixXd residuals = ts.y_scores - fitted;
  res.statistic = pcvm_statistic(residuals, angles).value;

  res.boot_stats = detail::bootstrap_statistics(
      fitted, residuals, angles, cfg.n_boot, cfg.seed, cfg.threads,
      [&](const Eigen::MatrixXd& y_star) { return (y_star - fitted).eval(); });

  res.p_value = pvalue(res.statistic, res.boot_stats);
  return res;
}

}  // namespace fgof

#endif
