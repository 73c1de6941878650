#ifndef FGOF_REGFIT_HPP
#define FGOF_REGFIT_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fgof/fpc.hpp"
#include "fgof/rng.hpp"

namespace fgof {

enum class EstimatorKind { Fpcr, Ridge, Lasso, L1s };
enum class LambdaPolicy { Fixed, Cv, OneSe };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Fpcr: return "fpcr";
    case EstimatorKind::Ridge: return "ridge";
    case EstimatorKind::Lasso: return "lasso";
    case EstimatorKind::L1s: return "l1s";
  }
  return "?";
}

/// Geometric grid of penalties from hi down to lo.
inline std::vector<double> log_lambda_grid(double lo = 1e-3, double hi = 1e2, int points = 50) {
  if (!(lo > 0) || !(hi > lo) || points < 1)
    throw std::invalid_argument("log_lambda_grid: need 0 < lo < hi and points >= 1");
  std::vector<double> grid(points);
  const double step = points == 1 ? 0.0 : (std::log(hi) - std::log(lo)) / (points - 1);
  for (int i = 0; i < points; ++i) grid[i] = std::exp(std::log(hi) - i * step);
  return grid;
}

/// Which estimator of the coefficient matrix to use and how to pick its
/// penalty. The default grid spans [1e-3, 1e2] and is expanded automatically
/// when cross-validation selects an endpoint.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::L1s;
  double alpha = 1.0;  // elastic-net mixing; rows are penalized as groups
  LambdaPolicy lambda_policy = LambdaPolicy::OneSe;
  double lambda = 0.0;  // used when lambda_policy == Fixed
  std::vector<double> lambda_grid = log_lambda_grid();
  int cv_folds = 10;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("EstimatorSpec: alpha outside [0, 1]");
    if (lambda_grid.empty()) throw std::invalid_argument("EstimatorSpec: empty lambda grid");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      if (!(lambda_grid[i] > 0)) throw std::invalid_argument("EstimatorSpec: lambdas must be positive");
      if (i > 0 && !(lambda_grid[i] < lambda_grid[i - 1]))
        throw std::invalid_argument("EstimatorSpec: lambda grid must be strictly decreasing");
    }
  }
};

/// Fitted coefficient matrix with the rows that survived selection, the
/// penalty used, the hat matrix when the estimator has one, and the residual
/// scores Y - X B.
struct Fit {
  Eigen::MatrixXd coef;                      // p x q, zero rows off the selection
  std::vector<Eigen::Index> selected_rows;   // ascending
  double lambda = 0.0;
  std::optional<Eigen::MatrixXd> hat;        // n x n
  Eigen::MatrixXd residuals;                 // n x q
};

namespace detail {

inline void check_design(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("fit: X and Y row counts differ");
  if (x.rows() < 1 || x.cols() < 1 || y.cols() < 1) throw std::invalid_argument("fit: empty design");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("fit: non-finite inputs");
}

// Least squares on a column subset; hat is the orthogonal projector onto the
// span of the selected columns, built from a thin QR so it stays symmetric
// and idempotent even for poorly conditioned designs.
inline Fit ols_on_columns(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          const std::vector<Eigen::Index>& cols) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  const Eigen::Index ps = static_cast<Eigen::Index>(cols.size());
  if (n < ps) throw std::invalid_argument("fit: fewer samples than selected predictors");

  Eigen::MatrixXd xs(n, ps);
  for (Eigen::Index c = 0; c < ps; ++c) xs.col(c) = x.col(cols[c]);

  Eigen::MatrixXd gram = xs.transpose() * xs;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0) || lo <= 1e-12 * hi) {
    std::ostringstream msg;
    msg << "fit: rank-deficient design, condition number of X'X is "
        << (lo > 0 ? hi / lo : std::numeric_limits<double>::infinity());
    throw std::runtime_error(msg.str());
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(xs);
  Eigen::MatrixXd thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(n, ps);
  Eigen::MatrixXd r = qr.matrixQR().topRows(ps).triangularView<Eigen::Upper>();
  Eigen::MatrixXd coef_sub =
      r.triangularView<Eigen::Upper>().solve(thin_q.transpose() * y);

  Fit fit;
  fit.coef = Eigen::MatrixXd::Zero(p, y.cols());
  for (Eigen::Index c = 0; c < ps; ++c) fit.coef.row(cols[c]) = coef_sub.row(c);
  fit.selected_rows = cols;
  fit.hat = thin_q * thin_q.transpose();
  fit.residuals = y - x * fit.coef;
  return fit;
}

inline std::vector<Eigen::Index> all_rows(Eigen::Index p) {
  std::vector<Eigen::Index> rows(p);
  std::iota(rows.begin(), rows.end(), Eigen::Index(0));
  return rows;
}

}  // namespace detail

/// Unpenalized least squares B = (X'X)^{-1} X'Y with its projection hat
/// matrix. Requires n >= p and a numerically invertible X'X.
inline Fit fit_fpcr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  detail::check_design(x, y);
  return detail::ols_on_columns(x, y, detail::all_rows(x.cols()));
}

/// Ridge regression B = (X'X + lambda I)^{-1} X'Y; lambda = 0 falls back to
/// the unpenalized path so the two agree exactly.
inline Fit fit_ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  detail::check_design(x, y);
  if (lambda < 0) throw std::invalid_argument("fit_ridge: negative penalty");
  if (lambda == 0.0) return fit_fpcr(x, y);
  const Eigen::Index p = x.cols();
  Eigen::MatrixXd gram = x.transpose() * x + lambda * Eigen::MatrixXd::Identity(p, p);
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("fit_ridge: factorization failed");
  Fit fit;
  fit.coef = llt.solve(x.transpose() * y);
  fit.selected_rows = detail::all_rows(p);
  fit.lambda = lambda;
  fit.hat = x * llt.solve(x.transpose());
  fit.residuals = y - x * fit.coef;
  return fit;
}

/// Smallest penalty at which the row-grouped lasso solution is identically
/// zero: max_j |(X'Y)_j| / (n alpha).
inline double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double alpha = 1.0) {
  if (!(alpha > 0)) throw std::invalid_argument("lasso_lambda_max: alpha must be positive");
  return (x.transpose() * y).rowwise().norm().maxCoeff() / (static_cast<double>(x.rows()) * alpha);
}

/// Elastic-net estimator with rows penalized as groups:
///   (1/2n) |Y - X B|_F^2 + lambda [ (1-alpha)/2 |B|_F^2 + alpha sum_j |B_j| ].
/// Solved by cyclic block coordinate descent over rows with the group
/// soft-thresholding update; rows zeroed by the threshold drop out of the
/// selection. Stops when no row moves more than 1e-7 of the data scale;
/// a full-precision KKT check guards the exit.
///
/// objective_trace, when given, collects the objective value after every
/// sweep (used by tests to assert monotone descent).
inline Fit fit_lasso(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda,
                     double alpha = 1.0, const Eigen::MatrixXd* warm_start = nullptr,
                     std::vector<double>* objective_trace = nullptr) {
  detail::check_design(x, y);
  if (lambda < 0) throw std::invalid_argument("fit_lasso: negative penalty");
  if (alpha < 0 || alpha > 1) throw std::invalid_argument("fit_lasso: alpha outside [0, 1]");

  const Eigen::Index n = x.rows(), p = x.cols(), q = y.cols();
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd col_scale = x.colwise().squaredNorm() / nd;  // a_j
  const double data_scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  const double tol = 1e-7 * data_scale;
  const int max_sweeps = 10'000;

  Eigen::MatrixXd coef = warm_start ? *warm_start : Eigen::MatrixXd::Zero(p, q);
  if (warm_start && (warm_start->rows() != p || warm_start->cols() != q))
    throw std::invalid_argument("fit_lasso: warm start has wrong shape");
  Eigen::MatrixXd resid = y - x * coef;

  const auto objective = [&]() {
    const double fit_term = resid.squaredNorm() / (2.0 * nd);
    const double ridge_term = 0.5 * (1.0 - alpha) * coef.squaredNorm();
    const double group_term = alpha * coef.rowwise().norm().sum();
    return fit_term + lambda * (ridge_term + group_term);
  };

  Eigen::RowVectorXd candidate(q);
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double denom = col_scale(j) + lambda * (1.0 - alpha);
      if (denom <= 0) continue;  // null column, row stays where it is
      // partial-residual correlation c_j = (1/n) X_j'R + a_j B_j
      candidate = (x.col(j).transpose() * resid) / nd + col_scale(j) * coef.row(j);
      double shrink = 1.0;
      if (alpha > 0) {
        const double cnorm = candidate.norm();
        const double threshold = lambda * alpha;
        shrink = cnorm > threshold ? 1.0 - threshold / cnorm : 0.0;
      }
      candidate *= shrink / denom;
      const double change = (candidate - coef.row(j)).cwiseAbs().maxCoeff();
      if (change > 0) {
        resid.noalias() += x.col(j) * (coef.row(j) - candidate);
        coef.row(j) = candidate;
      }
      max_change = std::max(max_change, change);
    }
    if (objective_trace) objective_trace->push_back(objective());
    converged = max_change <= tol;
  }

  // KKT residual: active rows must zero the subgradient, inactive rows must
  // sit inside the threshold ball.
  const Eigen::MatrixXd grad = -(x.transpose() * resid) / nd + lambda * (1.0 - alpha) * coef;
  const double kkt_tol = 1e-5 * std::max({1.0, data_scale, lambda * alpha});
  double kkt_gap = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double row_norm = coef.row(j).norm();
    if (row_norm > 0)
      kkt_gap = std::max(kkt_gap,
                         (grad.row(j) + lambda * alpha * coef.row(j) / row_norm).norm());
    else
      kkt_gap = std::max(kkt_gap, std::max(0.0, grad.row(j).norm() - lambda * alpha));
  }
  if (!converged && kkt_gap > kkt_tol) {
    std::ostringstream msg;
    msg << "fit_lasso: no convergence after " << max_sweeps << " sweeps, KKT gap " << kkt_gap;
    throw std::runtime_error(msg.str());
  }

  Fit fit;
  fit.coef = std::move(coef);
  fit.lambda = lambda;
  for (Eigen::Index j = 0; j < p; ++j)
    if (fit.coef.row(j).norm() > 0) fit.selected_rows.push_back(j);
  fit.residuals = std::move(resid);
  return fit;
}

/// Select-then-refit estimator: a pure group lasso picks the rows, then
/// unpenalized least squares is run on the selected columns alone. An empty
/// selection produces the null fit with a zero hat matrix.
inline Fit fit_l1s(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda,
                   const Eigen::MatrixXd* warm_start = nullptr) {
  Fit selector = fit_lasso(x, y, lambda, 1.0, warm_start);
  if (selector.selected_rows.empty()) {
    Fit fit;
    fit.coef = Eigen::MatrixXd::Zero(x.cols(), y.cols());
    fit.lambda = lambda;
    fit.hat = Eigen::MatrixXd::Zero(x.rows(), x.rows());
    fit.residuals = y;
    return fit;
  }
  Fit fit = detail::ols_on_columns(x, y, selector.selected_rows);
  fit.lambda = lambda;
  return fit;
}

inline Fit fit_estimator(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                         const EstimatorSpec& spec, double lambda) {
  switch (spec.kind) {
    case EstimatorKind::Fpcr: return fit_fpcr(x, y);
    case EstimatorKind::Ridge: return fit_ridge(x, y, lambda);
    case EstimatorKind::Lasso: return fit_lasso(x, y, lambda, spec.alpha);
    case EstimatorKind::L1s: return fit_l1s(x, y, lambda);
  }
  throw std::logic_error("fit_estimator: unknown kind");
}

/// Cross-validation curve over a decreasing penalty grid, with the penalty at
/// the error minimum and the largest penalty within one standard error of it.
struct CvCurve {
  std::vector<double> lambdas;     // decreasing
  std::vector<double> mean_error;
  std::vector<double> se;
  std::vector<int> fold_of;        // per-sample fold id (empty for leave-one-out)
  double lambda_cv = 0.0;
  double lambda_1se = 0.0;
};

namespace detail {

// Evaluates the CV error over a grid for ridge-type estimators via the
// leave-one-out identity e_i / (1 - h_ii); no refits needed.
inline void cv_ridge_loo(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, EstimatorKind kind,
                         const std::vector<double>& lambdas, std::vector<double>& mean_error,
                         std::vector<double>& se) {
  const Eigen::Index n = x.rows();
  mean_error.resize(lambdas.size());
  se.resize(lambdas.size());
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const double lam = kind == EstimatorKind::Fpcr ? 0.0 : lambdas[l];
    Fit fit = fit_ridge(x, y, lam);
    Eigen::VectorXd errors(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double leverage = 1.0 - (*fit.hat)(i, i);
      const double denom = std::abs(leverage) > 1e-12 ? leverage : 1e-12;
      errors(i) = fit.residuals.row(i).squaredNorm() / (denom * denom);
    }
    mean_error[l] = errors.mean();
    const double var = (errors.array() - mean_error[l]).square().sum() / std::max<double>(1.0, n - 1);
    se[l] = std::sqrt(var / static_cast<double>(n));
  }
}

// K-fold CV for the lasso family; folds are refit along the grid with warm
// starts from the previous (larger) penalty.
inline void cv_lasso_kfold(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double alpha,
                           const std::vector<double>& lambdas, const std::vector<int>& fold_of,
                           int folds, std::vector<double>& mean_error, std::vector<double>& se) {
  const Eigen::Index n = x.rows();
  const std::size_t nl = lambdas.size();
  Eigen::MatrixXd per_sample = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(nl));

  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    if (train.empty() || test.empty()) continue;
    Eigen::MatrixXd xt(train.size(), x.cols()), yt(train.size(), y.cols());
    for (std::size_t i = 0; i < train.size(); ++i) {
      xt.row(i) = x.row(train[i]);
      yt.row(i) = y.row(train[i]);
    }
    Eigen::MatrixXd warm = Eigen::MatrixXd::Zero(x.cols(), y.cols());
    for (std::size_t l = 0; l < nl; ++l) {
      Fit fit = fit_lasso(xt, yt, lambdas[l], alpha, &warm);
      warm = fit.coef;
      for (Eigen::Index i : test)
        per_sample(i, static_cast<Eigen::Index>(l)) = (y.row(i) - x.row(i) * fit.coef).squaredNorm();
    }
  }

  mean_error.resize(nl);
  se.resize(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    mean_error[l] = per_sample.col(static_cast<Eigen::Index>(l)).mean();
    // spread of the per-fold mean errors
    Eigen::VectorXd fold_mean = Eigen::VectorXd::Zero(folds);
    Eigen::VectorXd fold_count = Eigen::VectorXd::Zero(folds);
    for (Eigen::Index i = 0; i < n; ++i) {
      fold_mean(fold_of[i]) += per_sample(i, static_cast<Eigen::Index>(l));
      fold_count(fold_of[i]) += 1.0;
    }
    int used = 0;
    for (int f = 0; f < folds; ++f)
      if (fold_count(f) > 0) {
        fold_mean(f) /= fold_count(f);
        ++used;
      }
    double mu = 0;
    for (int f = 0; f < folds; ++f)
      if (fold_count(f) > 0) mu += fold_mean(f);
    mu /= std::max(1, used);
    double var = 0;
    for (int f = 0; f < folds; ++f)
      if (fold_count(f) > 0) var += (fold_mean(f) - mu) * (fold_mean(f) - mu);
    var /= std::max(1, used - 1);
    se[l] = std::sqrt(var / std::max(1, used));
  }
}

inline std::vector<double> extend_grid(const std::vector<double>& grid, bool upward, int points) {
  const double ratio = grid.size() > 1 ? grid[0] / grid[1] : 10.0;
  std::vector<double> out;
  if (upward) {
    for (int k = points; k >= 1; --k) out.push_back(grid.front() * std::pow(ratio, k));
    out.insert(out.end(), grid.begin(), grid.end());
  } else {
    out = grid;
    for (int k = 1; k <= points; ++k) out.push_back(grid.back() / std::pow(ratio, k));
  }
  return out;
}

}  // namespace detail

/// Picks lambda_cv (CV-error minimizer) and lambda_1se (largest penalty
/// within one standard error of the minimum) over the spec's grid. Ridge and
/// unpenalized fits use the leave-one-out hat shortcut; the lasso family uses
/// seeded k-fold CV with warm-started paths. The grid is extended when the
/// minimizer lands on an endpoint.
inline CvCurve select_lambda(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             const EstimatorSpec& spec, int folds, Rng& rng) {
  detail::check_design(x, y);
  spec.validate();
  const Eigen::Index n = x.rows();
  if (folds != n && folds < 2) throw std::invalid_argument("select_lambda: need >= 2 folds");
  folds = static_cast<int>(std::min<Eigen::Index>(folds, n));

  CvCurve curve;
  const bool loo_path = spec.kind == EstimatorKind::Fpcr || spec.kind == EstimatorKind::Ridge;
  if (!loo_path) {
    // balanced-fold assignment over a seeded shuffle
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    curve.fold_of.assign(n, 0);
    for (Eigen::Index i = 0; i < n; ++i) curve.fold_of[order[i]] = static_cast<int>(i % folds);
  }

  const double alpha = spec.kind == EstimatorKind::L1s ? 1.0 : spec.alpha;
  std::vector<double> grid = spec.lambda_grid;
  const int max_expansions = 2;
  for (int round = 0;; ++round) {
    if (loo_path)
      detail::cv_ridge_loo(x, y, spec.kind, grid, curve.mean_error, curve.se);
    else
      detail::cv_lasso_kfold(x, y, alpha, grid, curve.fold_of, folds, curve.mean_error, curve.se);
    const std::size_t best =
        std::min_element(curve.mean_error.begin(), curve.mean_error.end()) - curve.mean_error.begin();
    const bool at_top = best == 0;
    const bool at_bottom = best + 1 == grid.size();
    if (round >= max_expansions || grid.size() < 2 || (!at_top && !at_bottom)) break;
    grid = detail::extend_grid(grid, at_top, 8);
  }
  curve.lambdas = grid;

  const std::size_t best =
      std::min_element(curve.mean_error.begin(), curve.mean_error.end()) - curve.mean_error.begin();
  curve.lambda_cv = grid[best];
  const double cutoff = curve.mean_error[best] + curve.se[best];
  std::size_t pick = best;
  for (std::size_t l = 0; l <= best; ++l)
    if (curve.mean_error[l] <= cutoff) {
      pick = l;
      break;
    }
  curve.lambda_1se = grid[pick];
  return curve;
}

/// Fitted scores for new covariate scores.
inline Eigen::MatrixXd predict(const Fit& fit, const Eigen::MatrixXd& x_new) {
  if (x_new.cols() != fit.coef.rows()) throw std::invalid_argument("predict: dimension mismatch");
  return x_new * fit.coef;
}

/// Coefficient surface on the product grid of the two bases:
/// surface(s, t) = sum_jk B_jk psi_j(s) phi_k(t).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> beta_surface(
    const Eigen::MatrixXd& coef, const FpcBasis<Scalar>& basis_x, const FpcBasis<Scalar>& basis_y) {
  if (coef.rows() > basis_x.size() || coef.cols() > basis_y.size())
    throw std::invalid_argument("beta_surface: coefficient matrix exceeds the bases");
  return basis_x.eigenfunctions.topRows(coef.rows()).transpose() * coef.cast<Scalar>() *
         basis_y.eigenfunctions.topRows(coef.cols());
}

}  // namespace fgof

#endif
