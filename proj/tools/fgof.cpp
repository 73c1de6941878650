// Command-line front end: goodness-of-fit tests for function-on-function
// linear regression, kernel estimation, Monte Carlo studies, and the
// brute-force verification suite.

#include <CLI11.hpp>
#include <Eigen/Core>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fgof/csv.hpp"
#include "fgof/gof.hpp"
#include "fgof/manifest.hpp"
#include "fgof/oracle.hpp"
#include "fgof/parallel.hpp"
#include "fgof/simgen.hpp"
#include "fgof/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitInputError = 2;

std::string fmt(double v) { return fgof::detail::format_number(v); }

struct CommonOptions {
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

std::uint64_t resolve_seed(const CommonOptions& opts) {
  if (opts.seed) return *opts.seed;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::cout << "seed drawn from system entropy: " << seed << " (pass --seed to reproduce)\n";
  return seed;
}

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--seed", opts.seed, "seed for all randomness (drawn and printed when absent)");
  cmd->add_option("--threads", opts.threads,
                  "worker thread cap (default: FGOF_THREADS env var or hardware)");
}

struct EstimatorOptions {
  std::string estimator = "l1s";
  std::string lambda = "1se";
  double alpha = 1.0;
  int folds = 10;
  double grid_lo = 1e-3, grid_hi = 1e2;
  int grid_points = 50;
};

void add_estimator(CLI::App* cmd, EstimatorOptions& opts) {
  cmd->add_option("--estimator", opts.estimator, "fpcr | ridge | lasso | l1s")
      ->check(CLI::IsMember({"fpcr", "ridge", "lasso", "l1s"}));
  cmd->add_option("--lambda", opts.lambda, "penalty policy: cv | 1se | <number>");
  cmd->add_option("--alpha", opts.alpha, "elastic-net mixing in [0, 1]");
  cmd->add_option("--folds", opts.folds, "cross-validation folds for the lasso family");
  cmd->add_option("--lambda-min", opts.grid_lo, "lower end of the penalty grid");
  cmd->add_option("--lambda-max", opts.grid_hi, "upper end of the penalty grid");
  cmd->add_option("--lambda-points", opts.grid_points, "number of penalty grid points");
}

fgof::EstimatorSpec make_spec(const EstimatorOptions& opts) {
  fgof::EstimatorSpec spec;
  if (opts.estimator == "fpcr") spec.kind = fgof::EstimatorKind::Fpcr;
  else if (opts.estimator == "ridge") spec.kind = fgof::EstimatorKind::Ridge;
  else if (opts.estimator == "lasso") spec.kind = fgof::EstimatorKind::Lasso;
  else spec.kind = fgof::EstimatorKind::L1s;
  spec.alpha = spec.kind == fgof::EstimatorKind::Ridge ? 0.0 : opts.alpha;
  if (opts.lambda == "cv") {
    spec.lambda_policy = fgof::LambdaPolicy::Cv;
  } else if (opts.lambda == "1se") {
    spec.lambda_policy = fgof::LambdaPolicy::OneSe;
  } else {
    spec.lambda_policy = fgof::LambdaPolicy::Fixed;
    try {
      std::size_t used = 0;
      spec.lambda = std::stod(opts.lambda, &used);
      if (used != opts.lambda.size()) throw std::invalid_argument(opts.lambda);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--lambda", "expected cv, 1se or a number, got '" + opts.lambda + "'");
    }
    if (spec.lambda < 0) throw CLI::ValidationError("--lambda", "penalty must be nonnegative");
  }
  spec.lambda_grid = fgof::log_lambda_grid(opts.grid_lo, opts.grid_hi, opts.grid_points);
  spec.cv_folds = opts.folds;
  return spec;
}

void estimator_config(const EstimatorOptions& opts, std::map<std::string, std::string>& cfg) {
  cfg["estimator"] = opts.estimator;
  cfg["lambda_policy"] = opts.lambda;
  cfg["alpha"] = fmt(opts.alpha);
  cfg["folds"] = std::to_string(opts.folds);
  cfg["lambda_grid"] = fmt(opts.grid_lo) + ".." + fmt(opts.grid_hi) + "x" +
                       std::to_string(opts.grid_points);
}

// Writes report lines to stdout and, when a path is given, to the file; the
// manifest goes in-band and the wall time on its own trailing line.
struct ReportWriter {
  std::ostringstream body;

  template <typename T>
  void kv(const std::string& key, const T& value) {
    body << key << " = " << value << "\n";
  }

  void finish(const std::string& out_path, const fgof::RunManifest& manifest, double wall_s) {
    body << manifest.comment_line() << "\n";
    std::cout << body.str();
    std::cout << "# wall_time_s " << wall_s << "\n";
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) throw fgof::CsvError(out_path + ": cannot open file for writing");
      out << body.str();
      out << "# wall_time_s " << wall_s << "\n";
    }
  }
};

std::string join_indices(const std::vector<Eigen::Index>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i] + 1);  // 1-based component indices in reports
  }
  return out.empty() ? "none" : out;
}

int cmd_test(const std::string& x_path, const std::string& y_path,
             const std::optional<double>& x_lower, const std::optional<double>& x_upper,
             const std::optional<double>& y_lower, const std::optional<double>& y_upper,
             double ev, std::optional<double> ev_y, int n_boot, const std::string& beta0_arg,
             const std::string& out_path, const std::string& boot_out,
             const EstimatorOptions& est_opts, const CommonOptions& common) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = resolve_seed(common);
  if (common.threads > 0) fgof::set_max_threads(common.threads);

  auto x = fgof::read_curves_csv(x_path, x_lower, x_upper);
  auto y = fgof::read_curves_csv(y_path, y_lower, y_upper);
  if (x.n() != y.n())
    throw fgof::CsvError("sample size mismatch: " + x_path + " has " + std::to_string(x.n()) +
                         " curves, " + y_path + " has " + std::to_string(y.n()));

  fgof::GofConfig cfg;
  cfg.ev_threshold_x = ev;
  cfg.ev_threshold_y = ev_y.value_or(ev);
  cfg.n_boot = n_boot;
  cfg.estimator = make_spec(est_opts);
  cfg.seed = seed;
  cfg.threads = common.threads;

  fgof::RunManifest manifest;
  manifest.command = "test";
  manifest.seed = seed;
  manifest.add_input(x_path);
  manifest.add_input(y_path);
  estimator_config(est_opts, manifest.config);
  manifest.config["ev_x"] = fmt(cfg.ev_threshold_x);
  manifest.config["ev_y"] = fmt(cfg.ev_threshold_y);
  manifest.config["B"] = std::to_string(n_boot);
  manifest.config["hypothesis"] = beta0_arg.empty() ? "composite" : "simple:" + beta0_arg;

  fgof::GofResult res;
  if (beta0_arg.empty()) {
    res = fgof::run_gof(x, y, cfg);
  } else {
    Eigen::MatrixXd beta0;
    if (beta0_arg == "zero") {
      beta0 = Eigen::MatrixXd::Zero(x.m(), y.m());
    } else {
      auto surface = fgof::read_surface_csv(beta0_arg);
      if (surface.s_nodes.size() != x.m() || surface.t_nodes.size() != y.m())
        throw fgof::CsvError(beta0_arg + ": surface grid does not match the samples");
      beta0 = surface.values;
      manifest.add_input(beta0_arg);
    }
    res = fgof::run_gof_simple(x, y, beta0, cfg);
  }

  ReportWriter report;
  report.kv("statistic", fmt(res.statistic));
  report.kv("p_value", fmt(res.p_value));
  report.kv("p", res.p);
  report.kv("q", res.q);
  report.kv("p_tilde", res.p_tilde);
  report.kv("lambda", fmt(res.lambda));
  report.kv("selected", join_indices(res.selected));
  report.kv("B", res.boot_stats.size());

  if (!boot_out.empty()) {
    std::ofstream out(boot_out);
    if (!out) throw fgof::CsvError(boot_out + ": cannot open file for writing");
    out << manifest.comment_line() << "\n";
    out << "replicate,statistic\n";
    for (Eigen::Index b = 0; b < res.boot_stats.size(); ++b)
      out << (b + 1) << "," << fmt(res.boot_stats(b)) << "\n";
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.finish(out_path, manifest, wall);
  return kExitOk;
}

int cmd_estimate(const std::string& x_path, const std::string& y_path, double ev,
                 std::optional<double> ev_y, std::optional<int> fixed_p, std::optional<int> fixed_q,
                 const std::string& out_path, const std::string& coef_out,
                 const std::string& report_out, const EstimatorOptions& est_opts,
                 const CommonOptions& common) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = resolve_seed(common);
  if (common.threads > 0) fgof::set_max_threads(common.threads);

  auto x_raw = fgof::read_curves_csv(x_path);
  auto y_raw = fgof::read_curves_csv(y_path);
  if (x_raw.n() != y_raw.n()) throw fgof::CsvError("sample size mismatch between inputs");

  auto x = fgof::center(x_raw).first;
  auto y = fgof::center(y_raw).first;
  auto [basis_x, scores_x] = fgof::fpc(x, std::min(x.n(), x.m()));
  auto [basis_y, scores_y] = fgof::fpc(y, std::min(y.n(), y.m()));
  const Eigen::Index p =
      fixed_p ? static_cast<Eigen::Index>(*fixed_p) : fgof::truncate_by_ev(basis_x, ev);
  const Eigen::Index q = fixed_q ? static_cast<Eigen::Index>(*fixed_q)
                                 : fgof::truncate_by_ev(basis_y, ev_y.value_or(ev));
  if (p < 1 || p > basis_x.size() || q < 1 || q > basis_y.size())
    throw fgof::CsvError("requested truncation exceeds the available components");
  Eigen::MatrixXd xs = scores_x.scores.leftCols(p);
  Eigen::MatrixXd ys = scores_y.scores.leftCols(q);

  fgof::EstimatorSpec spec = make_spec(est_opts);
  double lambda = spec.lambda;
  double lambda_cv = 0.0, lambda_1se = 0.0;
  if (spec.kind != fgof::EstimatorKind::Fpcr) {
    fgof::Rng rng = fgof::Rng::substream(seed, fgof::detail::kCvStream);
    auto curve = fgof::select_lambda(xs, ys, spec, spec.cv_folds, rng);
    lambda_cv = curve.lambda_cv;
    lambda_1se = curve.lambda_1se;
    if (spec.lambda_policy == fgof::LambdaPolicy::Cv) lambda = curve.lambda_cv;
    if (spec.lambda_policy == fgof::LambdaPolicy::OneSe) lambda = curve.lambda_1se;
  }
  fgof::Fit fit = fgof::fit_estimator(xs, ys, spec, lambda);
  Eigen::MatrixXd surface = fgof::beta_surface(fit.coef, basis_x, basis_y);

  fgof::RunManifest manifest;
  manifest.command = "estimate";
  manifest.seed = seed;
  manifest.add_input(x_path);
  manifest.add_input(y_path);
  estimator_config(est_opts, manifest.config);
  manifest.config["p"] = std::to_string(p);
  manifest.config["q"] = std::to_string(q);

  if (!out_path.empty())
    fgof::write_surface_csv(out_path, x.grid.nodes, y.grid.nodes, surface,
                            {manifest.comment_line()});
  if (!coef_out.empty()) {
    std::ofstream out(coef_out);
    if (!out) throw fgof::CsvError(coef_out + ": cannot open file for writing");
    out << manifest.comment_line() << "\n";
    for (Eigen::Index i = 0; i < fit.coef.rows(); ++i) {
      for (Eigen::Index j = 0; j < fit.coef.cols(); ++j)
        out << (j ? "," : "") << fmt(fit.coef(i, j));
      out << "\n";
    }
  }

  ReportWriter report;
  report.kv("p", p);
  report.kv("q", q);
  report.kv("p_tilde", fit.selected_rows.empty() ? p : static_cast<Eigen::Index>(fit.selected_rows.size()));
  report.kv("selected", join_indices(fit.selected_rows));
  report.kv("lambda", fmt(lambda));
  report.kv("lambda_cv", fmt(lambda_cv));
  report.kv("lambda_1se", fmt(lambda_1se));
  report.kv("residual_fro_norm", fmt(fit.residuals.norm()));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.finish(report_out, manifest, wall);
  return kExitOk;
}

int cmd_simulate(const std::string& scenario, const std::string& mode_name,
                 const std::string& hypotheses, const std::string& ns, int replicates, int n_boot,
                 double ev, double level, int grid_m, int fixed_p, int fixed_q,
                 const std::string& out_path, const EstimatorOptions& est_opts,
                 const CommonOptions& common) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = resolve_seed(common);
  if (common.threads > 0) fgof::set_max_threads(common.threads);

  fgof::StudyConfig cfg;
  const fgof::ScenarioId id = scenario == "s1"   ? fgof::ScenarioId::S1
                              : scenario == "s2" ? fgof::ScenarioId::S2
                                                 : fgof::ScenarioId::S3;
  cfg.mode = mode_name == "simple"      ? fgof::StudyMode::Simple
             : mode_name == "composite" ? fgof::StudyMode::Composite
                                        : fgof::StudyMode::Estimation;
  cfg.scenario = fgof::make_scenario(id, cfg.mode == fgof::StudyMode::Simple, grid_m);

  std::stringstream hs(hypotheses);
  std::string token;
  while (std::getline(hs, token, ','))
    if (!token.empty()) cfg.hypotheses.push_back(token);
  std::stringstream nss(ns);
  while (std::getline(nss, token, ','))
    if (!token.empty()) cfg.sample_sizes.push_back(std::stol(token));

  cfg.replicates = replicates;
  cfg.n_boot = n_boot;
  cfg.estimator = make_spec(est_opts);
  cfg.ev_threshold = ev;
  cfg.level = level;
  cfg.seed = seed;
  cfg.threads = common.threads;
  cfg.fixed_p = fixed_p;
  cfg.fixed_q = fixed_q;

  const auto rows = fgof::run_study(cfg);

  fgof::RunManifest manifest;
  manifest.command = "simulate";
  manifest.seed = seed;
  estimator_config(est_opts, manifest.config);
  manifest.config["scenario"] = scenario;
  manifest.config["mode"] = mode_name;
  manifest.config["hypotheses"] = hypotheses;
  manifest.config["n"] = ns;
  manifest.config["M"] = std::to_string(replicates);
  manifest.config["B"] = std::to_string(n_boot);
  manifest.config["ev"] = fmt(ev);
  manifest.config["level"] = fmt(level);
  manifest.config["grid_points"] = std::to_string(grid_m);
  if (cfg.mode == fgof::StudyMode::Estimation) {
    manifest.config["p"] = std::to_string(fixed_p);
    manifest.config["q"] = std::to_string(fixed_q);
  }

  const std::string metric =
      cfg.mode == fgof::StudyMode::Estimation ? "mean_error" : "rejection_rate";
  std::ostringstream table;
  table << manifest.comment_line() << "\n";
  table << "scenario,hypothesis,n,estimator," << metric << ",mc_se\n";
  for (const auto& r : rows)
    table << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator << ","
          << fmt(r.value) << "," << fmt(r.mc_se) << "\n";
  std::cout << table.str();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "# wall_time_s " << wall << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw fgof::CsvError(out_path + ": cannot open file for writing");
    out << table.str();
    out << "# wall_time_s " << wall << "\n";

    // plot-ready long format next to the main table
    const std::string long_path =
        out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".csv"
            ? out_path.substr(0, out_path.size() - 4) + "_long.csv"
            : out_path + "_long";
    std::ofstream lf(long_path);
    if (!lf) throw fgof::CsvError(long_path + ": cannot open file for writing");
    lf << manifest.comment_line() << "\n";
    lf << "scenario,hypothesis,n,estimator,metric,value\n";
    for (const auto& r : rows) {
      lf << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator << "," << metric
         << "," << fmt(r.value) << "\n";
      lf << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator << ",mc_se,"
         << fmt(r.mc_se) << "\n";
      lf << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator
         << ",mean_p_tilde," << fmt(r.mean_p_tilde) << "\n";
      lf << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator << ",sd_p_tilde,"
         << fmt(r.sd_p_tilde) << "\n";
      lf << r.scenario << "," << r.hypothesis << "," << r.n << "," << r.estimator
         << ",mean_lambda," << fmt(r.mean_lambda) << "\n";
    }
    lf << "# wall_time_s " << wall << "\n";
  }
  return kExitOk;
}

struct VerifyCheck {
  std::string name;
  bool pass = false;
  double observed = 0, reference = 0, band = 0;
};

int cmd_verify(std::int64_t draws_wedge, std::int64_t draws_pcvm, std::int64_t draws_sphere,
               int triples, int instances, int pairs, int pd_cases, const std::string& jsonl_path,
               const CommonOptions& common) {
  const std::uint64_t seed = resolve_seed(common);
  if (common.threads > 0) fgof::set_max_threads(common.threads);
  std::vector<VerifyCheck> checks;
  fgof::Rng rng(seed);

  const auto randn_mat = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
  };

  // analytic wedge cases
  {
    Eigen::Vector2d a(0.3, -1.0), b(1.0, 0.5), origin(0.0, 0.0);
    Eigen::Vector2d e1(1, 0), e2(0, 1), me1(-1, 0);
    const double tol = 1e-12;
    VerifyCheck c;
    c.name = "wedge_analytic_cases";
    c.pass = std::abs(fgof::wedge_angle<double>(a, a, a, tol) - 2 * M_PI) < 1e-12 &&
             std::abs(fgof::wedge_angle<double>(a, b, a, tol) - M_PI) < 1e-12 &&
             std::abs(fgof::wedge_angle<double>(e1, e2, origin, tol) - M_PI / 2) < 1e-12 &&
             std::abs(fgof::wedge_angle<double>(e1, me1, origin, tol) - 0.0) < 1e-12;
    checks.push_back(c);
  }

  // random wedge areas against the sphere-sampling oracle
  {
    int hits = 0;
    const std::array<Eigen::Index, 4> dims{1, 2, 3, 5};
    for (int t = 0; t < triples; ++t) {
      const Eigen::Index p = dims[t % dims.size()];
      Eigen::VectorXd xi = randn_mat(p, 1), xj = randn_mat(p, 1), xr = randn_mat(p, 1);
      const double closed = fgof::wedge_angle<double>(xi, xj, xr, 1e-12) *
                            fgof::sphere_surface_area<double>(p) / (2.0 * M_PI);
      const auto mc = fgof::mc_wedge_area(xi, xj, xr, draws_wedge, seed + 17 * t);
      if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-12)) ++hits;
    }
    VerifyCheck c;
    c.name = "wedge_vs_mc_areas";
    c.observed = hits;
    c.reference = triples;
    c.band = std::ceil(0.02 * triples);
    c.pass = hits >= triples - static_cast<int>(c.band);
    checks.push_back(c);
  }

  // sphere integral identity
  {
    int hits = 0, total = 0;
    for (Eigen::Index q : {1, 2, 3, 4}) {
      for (int t = 0; t < pairs; ++t) {
        Eigen::VectorXd x = randn_mat(q, 1), y = randn_mat(q, 1);
        const double closed = fgof::sphere_quadratic_constant(q) * x.dot(y);
        const auto mc = fgof::mc_sphere_quadratic(x, y, draws_sphere, seed + 23 * total);
        if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-12)) ++hits;
        ++total;
      }
    }
    VerifyCheck c;
    c.name = "sphere_integral_identity";
    c.observed = hits;
    c.reference = total;
    c.band = std::ceil(0.02 * total);
    c.pass = hits >= total - static_cast<int>(c.band);
    checks.push_back(c);
  }

  // closed-form statistic against the Monte Carlo functional
  {
    int hits = 0;
    for (int t = 0; t < instances; ++t) {
      const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.below(17));
      const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.below(3));
      const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng.below(3));
      Eigen::MatrixXd x = randn_mat(n, p), e = randn_mat(n, q);
      const double closed = fgof::pcvm_statistic(e, fgof::adot(x)).value;
      const auto mc = fgof::mc_pcvm(e, x, draws_pcvm, seed + 31 * t);
      if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-10 * std::abs(closed))) ++hits;
    }
    VerifyCheck c;
    c.name = "statistic_vs_mc_functional";
    c.observed = hits;
    c.reference = instances;
    c.band = std::ceil(0.04 * instances);
    c.pass = hits >= instances - static_cast<int>(c.band);
    checks.push_back(c);
  }

  // positive definiteness of the angle matrix
  {
    int ok = 0;
    const std::array<Eigen::Index, 3> dims{1, 2, 5};
    for (int t = 0; t < pd_cases; ++t) {
      const Eigen::Index p = dims[t % dims.size()];
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(49));
      Eigen::MatrixXd x = randn_mat(n, p);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fgof::adot(x).values);
      if (es.eigenvalues().minCoeff() > 0) ++ok;
    }
    VerifyCheck c;
    c.name = "angle_matrix_positive_definite";
    c.observed = ok;
    c.reference = pd_cases;
    c.band = 0;
    c.pass = ok == pd_cases;
    checks.push_back(c);
  }

  bool all_ok = true;
  std::ofstream jsonl;
  if (!jsonl_path.empty()) {
    jsonl.open(jsonl_path);
    if (!jsonl) throw fgof::CsvError(jsonl_path + ": cannot open file for writing");
  }
  for (const auto& c : checks) {
    all_ok = all_ok && c.pass;
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name;
    if (c.reference > 0) std::cout << " (" << c.observed << "/" << c.reference << ")";
    std::cout << "\n";
    if (jsonl.is_open()) {
      nlohmann::json j;
      j["check"] = c.name;
      j["pass"] = c.pass;
      j["observed"] = c.observed;
      j["reference"] = c.reference;
      j["tolerance"] = c.band;
      jsonl << j.dump() << "\n";
    }
  }
  std::cout << (all_ok ? "verification passed" : "verification FAILED") << "\n";
  return all_ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goodness-of-fit testing for function-on-function linear regression"};
  app.set_version_flag("--version", fgof::version_string);
  app.require_subcommand(1);

  // ---- test ----
  auto* test = app.add_subcommand("test", "run the goodness-of-fit test on CSV curve samples");
  std::string x_path, y_path, beta0, test_out, boot_out;
  std::optional<double> x_lower, x_upper, y_lower, y_upper, ev_y;
  double ev = 0.99;
  int n_boot = 1000;
  EstimatorOptions test_est;
  CommonOptions test_common;
  test->add_option("--x", x_path, "covariate curves CSV")->required();
  test->add_option("--y", y_path, "response curves CSV")->required();
  test->add_option("--x-lower", x_lower, "covariate interval start (default: first node)");
  test->add_option("--x-upper", x_upper, "covariate interval end (default: last node)");
  test->add_option("--y-lower", y_lower, "response interval start");
  test->add_option("--y-upper", y_upper, "response interval end");
  test->add_option("--ev", ev, "explained-variance threshold (both samples)");
  test->add_option("--ev-y", ev_y, "response threshold override");
  test->add_option("--B", n_boot, "bootstrap replicates");
  test->add_option("--beta0", beta0, "simple hypothesis: 'zero' or a surface CSV");
  test->add_option("--out", test_out, "write the report to this file");
  test->add_option("--boot-out", boot_out, "write bootstrap statistics CSV");
  add_estimator(test, test_est);
  add_common(test, test_common);

  // ---- estimate ----
  auto* est = app.add_subcommand("estimate", "fit the kernel surface and export it");
  std::string ex_path, ey_path, est_out, coef_out, est_report;
  std::optional<int> est_p, est_q;
  std::optional<double> est_ev_y;
  double est_ev = 0.99;
  EstimatorOptions est_est;
  CommonOptions est_common;
  est->add_option("--x", ex_path, "covariate curves CSV")->required();
  est->add_option("--y", ey_path, "response curves CSV")->required();
  est->add_option("--ev", est_ev, "explained-variance threshold");
  est->add_option("--ev-y", est_ev_y, "response threshold override");
  est->add_option("--p", est_p, "fix the covariate truncation instead of the EV rule");
  est->add_option("--q", est_q, "fix the response truncation instead of the EV rule");
  est->add_option("--out", est_out, "surface CSV output path");
  est->add_option("--coef-out", coef_out, "coefficient matrix CSV output path");
  est->add_option("--report", est_report, "write the fit report to this file");
  add_estimator(est, est_est);
  add_common(est, est_common);

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "Monte Carlo power / estimation studies");
  std::string scenario = "s1", mode = "composite", hyps = "ne", ns = "50";
  std::string sim_out;
  int replicates = 500, sim_boot = 500, grid_m = 101, fixed_p = 2, fixed_q = 1;
  double sim_ev = 0.99, level = 0.05;
  EstimatorOptions sim_est;
  CommonOptions sim_common;
  sim->add_option("--scenario", scenario, "s1 | s2 | s3")
      ->check(CLI::IsMember({"s1", "s2", "s3"}));
  sim->add_option("--mode", mode, "simple | composite | estimation")
      ->check(CLI::IsMember({"simple", "composite", "estimation"}));
  sim->add_option("--hypothesis", hyps,
                  "comma list; simple: ne,fr1..3,c1..3,nlq1..3,nlt1..3; composite: ne,fr,nlq1..3,nlt1..3");
  sim->add_option("--n", ns, "comma list of sample sizes");
  sim->add_option("--M", replicates, "Monte Carlo replicates per cell");
  sim->add_option("--B", sim_boot, "bootstrap replicates per test");
  sim->add_option("--ev", sim_ev, "explained-variance threshold");
  sim->add_option("--level", level, "significance level for rejection rates");
  sim->add_option("--grid-points", grid_m, "grid nodes per domain");
  sim->add_option("--p", fixed_p, "estimation mode: covariate truncation");
  sim->add_option("--q", fixed_q, "estimation mode: response truncation");
  sim->add_option("--out", sim_out, "table CSV output path (long format written alongside)");
  add_estimator(sim, sim_est);
  add_common(sim, sim_common);

  // ---- verify ----
  auto* ver = app.add_subcommand("verify", "run the brute-force oracle suite");
  std::int64_t draws_wedge = 1'000'000, draws_pcvm = 200'000, draws_sphere = 200'000;
  int triples = 40, instances = 8, pairs = 10, pd_cases = 30;
  std::string jsonl_path;
  CommonOptions ver_common;
  ver->add_option("--draws-wedge", draws_wedge, "sphere draws per wedge area");
  ver->add_option("--draws-pcvm", draws_pcvm, "direction draws per statistic instance");
  ver->add_option("--draws-sphere", draws_sphere, "draws per sphere-integral check");
  ver->add_option("--triples", triples, "random wedge triples");
  ver->add_option("--instances", instances, "random statistic instances");
  ver->add_option("--pairs", pairs, "vector pairs per dimension");
  ver->add_option("--pd-cases", pd_cases, "positive-definiteness cases");
  ver->add_option("--jsonl", jsonl_path, "write one JSON line per check");
  add_common(ver, ver_common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (test->parsed())
      return cmd_test(x_path, y_path, x_lower, x_upper, y_lower, y_upper, ev, ev_y, n_boot, beta0,
                      test_out, boot_out, test_est, test_common);
    if (est->parsed())
      return cmd_estimate(ex_path, ey_path, est_ev, est_ev_y, est_p, est_q, est_out, coef_out,
                          est_report, est_est, est_common);
    if (sim->parsed())
      return cmd_simulate(scenario, mode, hyps, ns, replicates, sim_boot, sim_ev, level, grid_m,
                          fixed_p, fixed_q, sim_out, sim_est, sim_common);
    if (ver->parsed())
      return cmd_verify(draws_wedge, draws_pcvm, draws_sphere, triples, instances, pairs, pd_cases,
                        jsonl_path, ver_common);
  } catch (const fgof::CsvError& err) {
    std::cerr << "input error: " << err.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}
