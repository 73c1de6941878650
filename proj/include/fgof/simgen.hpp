#ifndef FGOF_SIMGEN_HPP
#define FGOF_SIMGEN_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fgof/functional_sample.hpp"
#include "fgof/gof.hpp"
#include "fgof/grid.hpp"
#include "fgof/parallel.hpp"
#include "fgof/regfit.hpp"
#include "fgof/rng.hpp"

namespace fgof {

/// Stochastic processes used by the simulation scenarios. Series kinds build
/// paths from 50-term basis expansions with random coefficients; covariance
/// kinds sample a Gaussian vector through a Cholesky factor of the grid
/// covariance.
enum class ProcessKind {
  SineSeries,        // sqrt2 sin((j-1/2) pi u) basis, Gaussian coefficients decaying like j^-2
  BrownianMotion,    // scaled Brownian motion pinned to zero at the interval start
  CosineUniform,     // cosine basis, uniform coefficients decaying like j^-7/4
  CosineGaussian,    // cosine basis, Gaussian coefficients decaying like j^-4/5
  ExpGaussian,       // stationary Gaussian, covariance sd^2 exp(-|s-t|/range)
  OrnsteinUhlenbeck  // stationary Gaussian, covariance sd^2 exp(-rate |s-t|)
};

struct ProcessSpec {
  ProcessKind kind = ProcessKind::BrownianMotion;
  int series_terms = 50;
  double sine_coef_sd = 2.0;        // SineSeries
  double bm_sd = 0.15;              // BrownianMotion
  double uniform_bound = std::sqrt(5.0);  // CosineUniform
  double cosine_gauss_sd = 1.5;     // CosineGaussian
  double gp_sd = 6.0;               // ExpGaussian
  double gp_range = 0.2;            // ExpGaussian
  double ou_sd = 0.35;              // OrnsteinUhlenbeck
  double ou_rate = 1.0;             // OrnsteinUhlenbeck
};

namespace detail {

// Orthonormal sine basis element on [lower, upper] in normalized coordinates.
inline double sine_basis(int j, double u, double len) {
  return std::sqrt(2.0 / len) * std::sin((j - 0.5) * M_PI * u);
}

// Orthonormal cosine family: a constant first element, then cos(j pi u).
inline double cosine_basis(int j, double u, double len) {
  if (j == 1) return std::sqrt(1.0 / len);
  return std::sqrt(2.0 / len) * std::cos(j * M_PI * u);
}

inline Eigen::MatrixXd process_covariance(const ProcessSpec& spec, const Grid<double>& grid) {
  const Eigen::Index m = grid.size();
  Eigen::MatrixXd cov(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      double c = 0;
      switch (spec.kind) {
        case ProcessKind::BrownianMotion:
          // standard Brownian covariance in raw time; a node at zero is
          // pinned, grids further out inherit the accumulated variance
          c = spec.bm_sd * spec.bm_sd *
              std::max(0.0, std::min(grid.nodes(i), grid.nodes(j)));
          break;
        case ProcessKind::ExpGaussian:
          c = spec.gp_sd * spec.gp_sd *
              std::exp(-std::abs(grid.nodes(i) - grid.nodes(j)) / spec.gp_range);
          break;
        case ProcessKind::OrnsteinUhlenbeck:
          c = spec.ou_sd * spec.ou_sd *
              std::exp(-spec.ou_rate * std::abs(grid.nodes(i) - grid.nodes(j)));
          break;
        default:
          throw std::logic_error("process_covariance: not a covariance-based process");
      }
      cov(i, j) = c;
      cov(j, i) = c;
    }
  return cov;
}

// Cholesky factor with nodes of exactly zero variance pinned out of the
// factorization and an adaptive diagonal jitter for near-singular matrices.
struct PinnedCholesky {
  Eigen::MatrixXd factor;              // lower triangular, free nodes only
  std::vector<Eigen::Index> free_idx;  // nodes that actually vary
  Eigen::Index m = 0;
};

inline PinnedCholesky pinned_cholesky(const Eigen::MatrixXd& cov) {
  PinnedCholesky out;
  out.m = cov.rows();
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    if (cov(i, i) > 0.0) out.free_idx.push_back(i);
  const Eigen::Index f = static_cast<Eigen::Index>(out.free_idx.size());
  Eigen::MatrixXd sub(f, f);
  for (Eigen::Index a = 0; a < f; ++a)
    for (Eigen::Index b = 0; b < f; ++b) sub(a, b) = cov(out.free_idx[a], out.free_idx[b]);

  double jitter = 0.0;
  const double jitter0 = 1e-10 * sub.trace() / std::max<Eigen::Index>(1, f);
  for (int attempt = 0; attempt <= 8; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(sub + jitter * Eigen::MatrixXd::Identity(f, f));
    if (llt.info() == Eigen::Success) {
      out.factor = llt.matrixL();
      return out;
    }
    jitter = jitter == 0.0 ? jitter0 : 2.0 * jitter;
  }
  throw std::runtime_error("pinned_cholesky: covariance not positive semi-definite after jitter");
}

}  // namespace detail

/// Draws n independent paths of the process on the grid. Path i draws from
/// substream (seed, i), so a longer run extends a shorter one path-for-path.
inline FunctionalSample<double> simulate(const ProcessSpec& spec, const Grid<double>& grid,
                                         Eigen::Index n, std::uint64_t seed, int threads = 0) {
  if (n < 1) throw std::invalid_argument("simulate: need n >= 1");
  if (spec.series_terms < 1) throw std::invalid_argument("simulate: need at least one series term");
  if (!(spec.bm_sd > 0) || !(spec.gp_sd > 0) || !(spec.gp_range > 0) || !(spec.ou_sd > 0) ||
      !(spec.ou_rate > 0) || !(spec.sine_coef_sd > 0) || !(spec.uniform_bound > 0) ||
      !(spec.cosine_gauss_sd > 0))
    throw std::invalid_argument("simulate: process parameters must be positive");
  const Eigen::Index m = grid.size();
  const double len = grid.length();
  Eigen::MatrixXd values(n, m);

  switch (spec.kind) {
    case ProcessKind::SineSeries:
    case ProcessKind::CosineUniform:
    case ProcessKind::CosineGaussian: {
      // basis functions evaluated once: terms x m
      Eigen::MatrixXd basis(spec.series_terms, m);
      for (int j = 1; j <= spec.series_terms; ++j)
        for (Eigen::Index t = 0; t < m; ++t) {
          const double u = (grid.nodes(t) - grid.lower) / len;
          basis(j - 1, t) = spec.kind == ProcessKind::SineSeries
                                ? detail::sine_basis(j, u, len)
                                : detail::cosine_basis(j, u, len);
        }
      parallel_for(n, [&](std::int64_t i) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
        Eigen::VectorXd coef(spec.series_terms);
        for (int j = 1; j <= spec.series_terms; ++j) {
          double amp = 0;
          switch (spec.kind) {
            case ProcessKind::SineSeries:
              // lambda_j = 1 / (pi^2 (j - 1/2)^2)
              amp = rng.normal(0.0, spec.sine_coef_sd) /
                    (M_PI * M_PI * (j - 0.5) * (j - 0.5));
              break;
            case ProcessKind::CosineUniform:
              amp = std::pow(j, -7.0 / 4.0) * rng.uniform(-spec.uniform_bound, spec.uniform_bound);
              break;
            default:
              amp = std::pow(j, -4.0 / 5.0) * rng.normal(0.0, spec.cosine_gauss_sd);
              break;
          }
          coef(j - 1) = amp;
        }
        values.row(i) = (coef.transpose() * basis).eval();
      }, threads);
      break;
    }
    case ProcessKind::BrownianMotion:
    case ProcessKind::ExpGaussian:
    case ProcessKind::OrnsteinUhlenbeck: {
      const auto chol = detail::pinned_cholesky(detail::process_covariance(spec, grid));
      const Eigen::Index f = static_cast<Eigen::Index>(chol.free_idx.size());
      parallel_for(n, [&](std::int64_t i) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i));
        Eigen::VectorXd z(f);
        for (Eigen::Index k = 0; k < f; ++k) z(k) = rng.normal();
        const Eigen::VectorXd path = chol.factor * z;
        values.row(i).setZero();
        for (Eigen::Index k = 0; k < f; ++k) values(i, chol.free_idx[k]) = path(k);
      }, threads);
      break;
    }
  }
  return make_sample(grid, std::move(values));
}

enum class ScenarioId { S1, S2, S3 };

inline const char* to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::S1: return "s1";
    case ScenarioId::S2: return "s2";
    case ScenarioId::S3: return "s3";
  }
  return "?";
}

/// A simulation scenario: the kernel surface family, the covariate process on
/// grid_x and the error process on grid_y.
struct Scenario {
  ScenarioId id = ScenarioId::S1;
  Grid<double> grid_x, grid_y;
  ProcessSpec covariate, error;
};

/// Builds one of the three stock scenarios. shared_domain = true puts the
/// response on the covariate's [0, 1] domain (single-domain significance
/// studies); otherwise the response lives on [2, 3].
inline Scenario make_scenario(ScenarioId id, bool shared_domain = false, Eigen::Index m = 101) {
  Scenario sc;
  sc.id = id;
  sc.grid_x = make_grid(0.0, 1.0, m);
  sc.grid_y = shared_domain ? sc.grid_x : make_grid(2.0, 3.0, m);
  switch (id) {
    case ScenarioId::S1:
      sc.covariate.kind = ProcessKind::SineSeries;
      sc.error.kind = ProcessKind::BrownianMotion;
      break;
    case ScenarioId::S2:
      sc.covariate.kind = ProcessKind::ExpGaussian;
      sc.error.kind = ProcessKind::OrnsteinUhlenbeck;
      break;
    case ScenarioId::S3:
      sc.covariate.kind = ProcessKind::CosineUniform;
      sc.error.kind = ProcessKind::CosineGaussian;
      break;
  }
  return sc;
}

/// Kernel surface of the scenario evaluated on grid_x x grid_y.
inline Eigen::MatrixXd kernel_surface(const Scenario& sc) {
  const auto& gx = sc.grid_x;
  const auto& gy = sc.grid_y;
  Eigen::MatrixXd surface(gx.size(), gy.size());
  switch (sc.id) {
    case ScenarioId::S1:
      for (Eigen::Index i = 0; i < gx.size(); ++i)
        for (Eigen::Index j = 0; j < gy.size(); ++j) {
          const double s = gx.nodes(i) - gx.lower;
          const double t = gy.nodes(j) - gy.lower;
          surface(i, j) = s * s + t * t;
        }
      break;
    case ScenarioId::S2:
      for (Eigen::Index i = 0; i < gx.size(); ++i)
        for (Eigen::Index j = 0; j < gy.size(); ++j) {
          const double s = gx.nodes(i) - gx.lower;
          const double t = gy.nodes(j) - gy.lower;
          surface(i, j) = 2.0 * (std::sin(6.0 * M_PI * s) + std::cos(6.0 * M_PI * t));
        }
      break;
    case ScenarioId::S3: {
      // tensor series on the cosine bases; the first four rows and columns
      // of the coefficient array vanish
      const int terms = 50;
      surface.setZero();
      Eigen::MatrixXd bx(terms, gx.size()), by(terms, gy.size());
      for (int j = 1; j <= terms; ++j) {
        for (Eigen::Index t = 0; t < gx.size(); ++t)
          bx(j - 1, t) = detail::cosine_basis(j, (gx.nodes(t) - gx.lower) / gx.length(), gx.length());
        for (Eigen::Index t = 0; t < gy.size(); ++t)
          by(j - 1, t) = detail::cosine_basis(j, (gy.nodes(t) - gy.lower) / gy.length(), gy.length());
      }
      Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(terms, terms);
      for (int j = 5; j <= terms; ++j)
        for (int k = 5; k <= terms; ++k)
          coef(j - 1, k - 1) = 6.0 * ((j + k) % 2 == 0 ? 1.0 : -1.0) *
                               std::pow(j - 4, -12.0 / 5.0) * std::pow(k - 4, -1.0 / 4.0);
      surface = bx.transpose() * coef * by;
      break;
    }
  }
  return surface;
}

/// Integral operator of the kernel: Y_i(t) = int X_i(s) surface(s, t) ds by
/// quadrature in s.
inline FunctionalSample<double> apply_linear(const FunctionalSample<double>& x,
                                             const Eigen::MatrixXd& surface,
                                             const Grid<double>& grid_y) {
  if (surface.rows() != x.m() || surface.cols() != grid_y.size())
    throw std::invalid_argument("apply_linear: surface does not match the grids");
  FunctionalSample<double> out;
  out.grid = grid_y;
  out.values = x.values * x.grid.weights.asDiagonal() * surface;
  return out;
}

enum class DeviationFamily { None, Linear, Concurrent, Quadratic, Trigonometric };

/// A deviation term added to the error: family, intensity, and (for the
/// concurrent family) which of the three coefficient functions to use.
struct DeviationSpec {
  DeviationFamily family = DeviationFamily::None;
  double intensity = 0.0;
  int concurrent_variant = 1;  // 1..3
};

namespace detail {

inline double concurrent_coefficient(int variant, double t, double lower) {
  switch (variant) {
    case 1: return std::sqrt(std::abs(std::sin(M_PI * t) - std::cos(M_PI * t)));
    case 2: return std::log(t - lower + 0.5);
    case 3: {
      const double c = t - 0.5;
      return c * c * c;
    }
    default: throw std::invalid_argument("concurrent_coefficient: variant must be 1, 2 or 3");
  }
}

// Linear interpolation of each curve at an arbitrary point of its own grid.
inline double interp_curve(const FunctionalSample<double>& x, Eigen::Index i, double s) {
  const auto& nodes = x.grid.nodes;
  if (s <= nodes(0)) return x.values(i, 0);
  if (s >= nodes(nodes.size() - 1)) return x.values(i, nodes.size() - 1);
  Eigen::Index hi = 1;
  while (nodes(hi) < s) ++hi;
  const double w = (s - nodes(hi - 1)) / (nodes(hi) - nodes(hi - 1));
  return (1.0 - w) * x.values(i, hi - 1) + w * x.values(i, hi);
}

}  // namespace detail

/// Deviation term on the response grid, scaled by the spec intensity:
///   Linear          delta <<X, beta>>
///   Concurrent      delta b(t) X(t)           (grids must coincide)
///   Quadratic       delta [X^2(affine map of t) - 1]
///   Trigonometric   delta (sin 2 pi t - cos 2 pi t) |X|^2
inline FunctionalSample<double> apply_deviation(const FunctionalSample<double>& x,
                                                const DeviationSpec& dev, const Scenario& sc) {
  if (dev.intensity < 0.0) throw std::invalid_argument("apply_deviation: negative intensity");
  const auto& gy = sc.grid_y;
  FunctionalSample<double> out;
  out.grid = gy;
  out.values.setZero(x.n(), gy.size());
  if (dev.family == DeviationFamily::None || dev.intensity == 0.0) return out;

  switch (dev.family) {
    case DeviationFamily::Linear:
      out.values = dev.intensity * apply_linear(x, kernel_surface(sc), gy).values;
      break;
    case DeviationFamily::Concurrent: {
      if (!x.grid.approx_equal(gy))
        throw std::invalid_argument("apply_deviation: concurrent model needs identical grids");
      Eigen::VectorXd b(gy.size());
      for (Eigen::Index t = 0; t < gy.size(); ++t)
        b(t) = detail::concurrent_coefficient(dev.concurrent_variant, gy.nodes(t), gy.lower);
      out.values = dev.intensity * (x.values.array().rowwise() * b.transpose().array()).matrix();
      break;
    }
    case DeviationFamily::Quadratic: {
      const auto& gx = x.grid;
      for (Eigen::Index t = 0; t < gy.size(); ++t) {
        const double s = gx.lower + (gy.nodes(t) - gy.lower) * gx.length() / gy.length();
        for (Eigen::Index i = 0; i < x.n(); ++i) {
          const double xv = detail::interp_curve(x, i, s);
          out.values(i, t) = dev.intensity * (xv * xv - 1.0);
        }
      }
      break;
    }
    case DeviationFamily::Trigonometric: {
      Eigen::VectorXd profile(gy.size());
      for (Eigen::Index t = 0; t < gy.size(); ++t)
        profile(t) = std::sin(2.0 * M_PI * gy.nodes(t)) - std::cos(2.0 * M_PI * gy.nodes(t));
      for (Eigen::Index i = 0; i < x.n(); ++i)
        out.values.row(i) =
            dev.intensity * squared_norm(x.values.row(i).transpose(), x.grid) * profile.transpose();
      break;
    }
    case DeviationFamily::None: break;
  }
  return out;
}

enum class StudyMode { Simple, Composite, Estimation };

/// One hypothesis cell of a power study: how the response is generated.
struct Hypothesis {
  std::string name;
  double linear_scale = 0.0;  // multiple of <<X, beta>> entering the response
  DeviationSpec deviation;
};

/// Named hypothesis menus of the two power studies. Simple-mode names:
/// ne, fr1..fr3, c1..c3, nlq1..nlq3, nlt1..nlt3. Composite-mode names:
/// ne, fr, nlq1..nlq3, nlt1..nlt3.
inline Hypothesis parse_hypothesis(const std::string& name, ScenarioId id, StudyMode mode) {
  const int sc = id == ScenarioId::S1 ? 0 : id == ScenarioId::S2 ? 1 : 2;
  const auto level = [&](const char* prefix) -> int {
    const std::size_t len = std::string(prefix).size();
    if (name.size() != len + 1 || name.compare(0, len, prefix) != 0) return 0;
    const char c = name[len];
    return c >= '1' && c <= '3' ? c - '0' : 0;
  };

  Hypothesis h;
  h.name = name;
  if (name == "ne") return h;

  if (mode == StudyMode::Simple) {
    static constexpr std::array<std::array<double, 3>, 3> fr{{{0.035, 0.08, 0.15},
                                                              {0.01, 0.02, 0.03},
                                                              {1.0, 1.3, 1.6}}};
    static constexpr std::array<std::array<double, 3>, 3> conc{{{0.025, 0.05, 0.15},
                                                                {0.2, 0.6, 1.0},
                                                                {0.01, 0.025, 0.05}}};
    static constexpr std::array<std::array<double, 3>, 3> nl{{{0.025, 0.075, 0.15},
                                                              {0.02, 0.04, 0.1},
                                                              {0.2, 0.35, 0.55}}};
    if (int l = level("fr")) {
      h.deviation = {DeviationFamily::Linear, fr[sc][l - 1], 1};
      return h;
    }
    if (int l = level("c")) {
      h.deviation = {DeviationFamily::Concurrent, conc[sc][l - 1], sc + 1};
      return h;
    }
    if (int l = level("nlq")) {
      h.deviation = {DeviationFamily::Quadratic, nl[sc][l - 1], 1};
      return h;
    }
    if (int l = level("nlt")) {
      h.deviation = {DeviationFamily::Trigonometric, nl[sc][l - 1], 1};
      return h;
    }
  } else if (mode == StudyMode::Composite) {
    static constexpr std::array<std::array<double, 3>, 3> nlq{{{0.02, 0.04, 0.1},
                                                               {0.01, 0.02, 0.03},
                                                               {0.02, 0.15, 0.5}}};
    static constexpr std::array<std::array<double, 3>, 3> nlt{{{0.03, 0.05, 0.1},
                                                               {0.035, 0.045, 0.055},
                                                               {0.025, 0.2, 0.45}}};
    if (name == "fr") {
      h.linear_scale = 0.5;
      return h;
    }
    if (int l = level("nlq")) {
      h.linear_scale = 1.0;
      h.deviation = {DeviationFamily::Quadratic, nlq[sc][l - 1], 1};
      return h;
    }
    if (int l = level("nlt")) {
      h.linear_scale = 1.0;
      h.deviation = {DeviationFamily::Trigonometric, nlt[sc][l - 1], 1};
      return h;
    }
  }
  throw std::invalid_argument("parse_hypothesis: unknown hypothesis '" + name + "'");
}

/// Generates one response sample for a hypothesis cell.
inline FunctionalSample<double> generate_response(const FunctionalSample<double>& x,
                                                  const FunctionalSample<double>& error,
                                                  const Hypothesis& h, const Scenario& sc) {
  FunctionalSample<double> y = error;
  if (h.linear_scale != 0.0)
    y.values += h.linear_scale * apply_linear(x, kernel_surface(sc), sc.grid_y).values;
  if (h.deviation.family != DeviationFamily::None)
    y.values += apply_deviation(x, h.deviation, sc).values;
  return y;
}

struct StudyConfig {
  Scenario scenario;
  StudyMode mode = StudyMode::Composite;
  std::vector<std::string> hypotheses;
  std::vector<Eigen::Index> sample_sizes;
  int replicates = 500;
  int n_boot = 500;
  EstimatorSpec estimator;
  double ev_threshold = 0.99;
  double level = 0.05;
  std::uint64_t seed = 1;
  int threads = 0;
  Eigen::Index fixed_p = 2;  // estimation mode only
  Eigen::Index fixed_q = 1;
};

struct StudyRow {
  std::string scenario;
  std::string hypothesis;
  std::string estimator;
  Eigen::Index n = 0;
  double value = 0.0;  // rejection rate (power studies) or mean L2 error
  double mc_se = 0.0;
  double mean_p_tilde = 0.0;
  double sd_p_tilde = 0.0;
  double mean_lambda = 0.0;
};

namespace detail {

struct ReplicateOutcome {
  double value = 0.0;   // 0/1 rejection or L2 error
  double p_tilde = 0.0;
  double lambda = 0.0;
};

inline ReplicateOutcome run_power_replicate(const StudyConfig& cfg, const Hypothesis& h,
                                            Eigen::Index n, std::uint64_t rep_seed) {
  const Scenario& sc = cfg.scenario;
  auto x = simulate(sc.covariate, sc.grid_x, n, detail::mix64(rep_seed ^ 0x11), 1);
  auto e = simulate(sc.error, sc.grid_y, n, detail::mix64(rep_seed ^ 0x22), 1);
  auto y = generate_response(x, e, h, sc);

  GofConfig gof;
  gof.ev_threshold_x = cfg.ev_threshold;
  gof.ev_threshold_y = cfg.ev_threshold;
  gof.n_boot = cfg.n_boot;
  gof.estimator = cfg.estimator;
  gof.seed = detail::mix64(rep_seed ^ 0x33);
  gof.threads = 1;  // replicates parallelize above this level

  GofResult res = cfg.mode == StudyMode::Simple
                      ? run_gof_simple(x, y, Eigen::MatrixXd::Zero(x.m(), y.m()), gof)
                      : run_gof(x, y, gof);
  ReplicateOutcome out;
  out.value = res.p_value <= cfg.level ? 1.0 : 0.0;
  out.p_tilde = static_cast<double>(res.selected.size());
  out.lambda = res.lambda;
  return out;
}

inline ReplicateOutcome run_estimation_replicate(const StudyConfig& cfg, Eigen::Index n,
                                                 std::uint64_t rep_seed) {
  const Scenario& sc = cfg.scenario;
  const Eigen::MatrixXd beta = kernel_surface(sc);
  auto x = simulate(sc.covariate, sc.grid_x, n, detail::mix64(rep_seed ^ 0x11), 1);
  auto e = simulate(sc.error, sc.grid_y, n, detail::mix64(rep_seed ^ 0x22), 1);
  FunctionalSample<double> y = e;
  y.values += apply_linear(x, beta, sc.grid_y).values;

  auto xc = center(x).first;
  auto yc = center(y).first;
  auto [bx, sx] = fpc(xc, cfg.fixed_p);
  auto [by, sy] = fpc(yc, cfg.fixed_q);

  double lambda = 0.0;
  if (cfg.estimator.kind != EstimatorKind::Fpcr) {
    if (cfg.estimator.lambda_policy == LambdaPolicy::Fixed) {
      lambda = cfg.estimator.lambda;
    } else {
      Rng rng = Rng::substream(rep_seed, kCvStream);
      CvCurve curve = select_lambda(sx.scores, sy.scores, cfg.estimator, cfg.estimator.cv_folds, rng);
      lambda = cfg.estimator.lambda_policy == LambdaPolicy::Cv ? curve.lambda_cv : curve.lambda_1se;
    }
  }
  Fit fit = fit_estimator(sx.scores, sy.scores, cfg.estimator, lambda);
  const Eigen::MatrixXd surface = beta_surface(fit.coef, bx, by);

  const Eigen::MatrixXd diff = beta - surface;
  const double err2 = (sc.grid_x.weights.transpose() * diff.cwiseProduct(diff) * sc.grid_y.weights)(0);
  ReplicateOutcome out;
  out.value = std::sqrt(std::max(0.0, err2));
  out.p_tilde = static_cast<double>(fit.selected_rows.size());
  out.lambda = lambda;
  return out;
}

}  // namespace detail

/// Monte Carlo study over hypothesis cells and sample sizes. Power modes
/// report the fraction of replicates with p-value at or below the level;
/// estimation mode reports the mean L2 distance between the true and fitted
/// kernel surfaces at fixed (p, q). A failing replicate aborts the study with
/// its index in the message.
inline std::vector<StudyRow> run_study(const StudyConfig& cfg) {
  if (cfg.replicates < 1) throw std::invalid_argument("run_study: need at least one replicate");
  std::vector<Hypothesis> hyps;
  if (cfg.mode == StudyMode::Estimation) {
    hyps.push_back(Hypothesis{"estimation", 1.0, {}});
  } else {
    for (const auto& name : cfg.hypotheses)
      hyps.push_back(parse_hypothesis(name, cfg.scenario.id, cfg.mode));
  }
  if (hyps.empty()) throw std::invalid_argument("run_study: no hypotheses given");
  if (cfg.sample_sizes.empty()) throw std::invalid_argument("run_study: no sample sizes given");

  std::vector<StudyRow> rows;
  std::uint64_t cell = 0;
  for (const auto& h : hyps) {
    for (Eigen::Index n : cfg.sample_sizes) {
      std::vector<detail::ReplicateOutcome> outcomes(cfg.replicates);
      parallel_for(
          cfg.replicates,
          [&](std::int64_t rep) {
            const std::uint64_t rep_seed =
                detail::mix64(cfg.seed) ^ detail::mix64(cell * 1'000'003ULL + rep);
            try {
              outcomes[rep] = cfg.mode == StudyMode::Estimation
                                  ? detail::run_estimation_replicate(cfg, n, rep_seed)
                                  : detail::run_power_replicate(cfg, h, n, rep_seed);
            } catch (const std::exception& err) {
              throw std::runtime_error("run_study: replicate " + std::to_string(rep) + " of cell " +
                                       h.name + "/n=" + std::to_string(n) + " failed: " + err.what());
            }
          },
          cfg.threads);

      StudyRow row;
      row.scenario = to_string(cfg.scenario.id);
      row.hypothesis = h.name;
      row.estimator = to_string(cfg.estimator.kind);
      row.n = n;
      double sum = 0, sum2 = 0, pt = 0, pt2 = 0, lam = 0;
      for (const auto& o : outcomes) {
        sum += o.value;
        sum2 += o.value * o.value;
        pt += o.p_tilde;
        pt2 += o.p_tilde * o.p_tilde;
        lam += o.lambda;
      }
      const double M = static_cast<double>(cfg.replicates);
      row.value = sum / M;
      const double var = std::max(0.0, sum2 / M - row.value * row.value);
      row.mc_se = std::sqrt(var / M);
      row.mean_p_tilde = pt / M;
      row.sd_p_tilde = std::sqrt(std::max(0.0, pt2 / M - row.mean_p_tilde * row.mean_p_tilde));
      row.mean_lambda = lam / M;
      rows.push_back(std::move(row));
      ++cell;
    }
  }
  return rows;
}

}  // namespace fgof

#endif
