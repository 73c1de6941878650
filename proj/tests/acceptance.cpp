// Acceptance suite: end-to-end checks of the statistic machinery, the
// bootstrap test, and the desk-scale reproduction targets. Prints one
// pass/fail line per criterion; the exit code is the number of failures.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "fgof/csv.hpp"
#include "fgof/gof.hpp"
#include "fgof/oracle.hpp"
#include "fgof/pcvm.hpp"
#include "fgof/regfit.hpp"
#include "fgof/rng.hpp"
#include "fgof/simgen.hpp"

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void guarded(int number, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& err) {
    report(number, name, false, std::string("exception: ") + err.what());
  }
}

Eigen::MatrixXd randn(Eigen::Index rows, Eigen::Index cols, fgof::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---- criterion bodies ----------------------------------------------------

void criterion_statistic_vs_oracle() {
  fgof::Rng rng(101);
  int hits = 0;
  const int total = 25;
  for (int t = 0; t < total; ++t) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.below(17));   // <= 20
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.below(3));    // <= 3
    const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng.below(3));
    Eigen::MatrixXd x = randn(n, p, rng);
    Eigen::MatrixXd e = randn(n, q, rng);
    const double closed = fgof::pcvm_statistic(e, fgof::adot(x)).value;
    const auto mc = fgof::mc_pcvm(e, x, 1'000'000, 7'000 + t);
    if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-12)) ++hits;
  }
  report(1, "closed-form statistic vs Monte Carlo functional", hits >= 24,
         std::to_string(hits) + "/25 inside 3 SE");
}

void criterion_wedge_vs_oracle() {
  const double tie_tol = 1e-12;
  bool analytic_ok = true;
  {
    Eigen::Vector2d a(0.3, -1.0), b(1.0, 0.5), origin(0, 0), e1(1, 0), e2(0, 1), me1(-1, 0);
    analytic_ok = std::abs(fgof::wedge_angle<double>(a, a, a, tie_tol) - 2 * M_PI) <= 1e-14 &&
                  std::abs(fgof::wedge_angle<double>(a, b, a, tie_tol) - M_PI) <= 1e-14 &&
                  std::abs(fgof::wedge_angle<double>(a, b, b, tie_tol) - M_PI) <= 1e-14 &&
                  std::abs(fgof::wedge_angle<double>(e1, e2, origin, tie_tol) - M_PI / 2) <= 1e-14 &&
                  std::abs(fgof::wedge_angle<double>(e1, me1, origin, tie_tol) - 0.0) <= 1e-14;
  }
  fgof::Rng rng(202);
  const std::array<Eigen::Index, 4> dims{1, 2, 3, 5};
  int hits = 0;
  const int total = 200;
  for (int t = 0; t < total; ++t) {
    const Eigen::Index p = dims[t % dims.size()];
    Eigen::VectorXd xi = randn(p, 1, rng), xj = randn(p, 1, rng), xr = randn(p, 1, rng);
    const double closed = fgof::wedge_angle<double>(xi, xj, xr, tie_tol) *
                          fgof::sphere_surface_area<double>(p) / (2.0 * M_PI);
    const auto mc = fgof::mc_wedge_area(xi, xj, xr, 1'000'000, 9'000 + t);
    if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-12)) ++hits;
  }
  report(2, "wedge angles vs Monte Carlo sphere areas", analytic_ok && hits >= 196,
         std::to_string(hits) + "/200 inside 3 binomial SE, analytic cases " +
             (analytic_ok ? "exact" : "BROKEN"));
}

void criterion_sphere_integral() {
  fgof::Rng rng(303);
  int hits = 0, total = 0;
  for (Eigen::Index q : {1, 2, 3, 4}) {
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd x = randn(q, 1, rng), y = randn(q, 1, rng);
      const double closed = fgof::sphere_quadratic_constant(q) * x.dot(y);
      const auto mc = fgof::mc_sphere_quadratic(x, y, 200'000, 11'000 + total);
      if (std::abs(mc.estimate - closed) <= std::max(3.0 * mc.se, 1e-12)) ++hits;
      ++total;
    }
  }
  report(3, "sphere quadratic-integral identity", hits >= total - 2,
         std::to_string(hits) + "/" + std::to_string(total) + " inside 3 SE");
}

void criterion_positive_definite() {
  fgof::Rng rng(404);
  const std::array<Eigen::Index, 3> dims{1, 2, 5};
  int ok = 0;
  const int total = 200;
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < total; ++t) {
    const Eigen::Index p = dims[t % dims.size()];
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(49));  // <= 50
    Eigen::MatrixXd x = randn(n, p, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fgof::adot(x).values);
    const double lo = es.eigenvalues().minCoeff();
    worst = std::min(worst, lo);
    if (lo > 0) ++ok;
  }
  report(4, "angle matrix positive definite for distinct rows", ok == total,
         std::to_string(ok) + "/200, smallest eigenvalue " + fmt(worst));
}

void criterion_scalar_reduction() {
  fgof::Rng rng(505);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.below(18));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.below(4));
    Eigen::MatrixXd x = randn(n, p, rng);
    Eigen::MatrixXd e = randn(n, 1, rng);
    auto a = fgof::adot(x);
    const double general = fgof::pcvm_statistic(e, a).value;
    const double scalar = fgof::pcvm_statistic_scalar_response<double>(e.col(0), a).value;
    worst = std::max(worst, std::abs(general - scalar) / std::max(1e-300, std::abs(scalar)));
  }
  report(5, "scalar-response reduction at q = 1", worst <= 1e-10,
         "max relative gap " + fmt(worst));
}

void criterion_size_reproduction() {
  // replicates beyond the reference protocol sharpen the verdict against
  // Monte Carlo luck; the tolerance band itself is unchanged
  fgof::StudyConfig cfg;
  cfg.scenario = fgof::make_scenario(fgof::ScenarioId::S1, false);
  cfg.mode = fgof::StudyMode::Composite;
  cfg.hypotheses = {"ne"};
  cfg.sample_sizes = {50};
  cfg.replicates = 2000;
  cfg.n_boot = 500;
  cfg.estimator.kind = fgof::EstimatorKind::L1s;
  cfg.estimator.lambda_policy = fgof::LambdaPolicy::OneSe;
  cfg.seed = 606;
  const auto rows = fgof::run_study(cfg);
  const double rate = rows.at(0).value;
  report(6, "composite-test size at the null (reference 0.043)",
         rate >= 0.043 - 0.025 && rate <= 0.043 + 0.025,
         "rejection rate " + fmt(rate) + " at M=2000, B=500");
}

void criterion_power_reproduction() {
  fgof::StudyConfig cfg;
  cfg.scenario = fgof::make_scenario(fgof::ScenarioId::S1, true);
  cfg.mode = fgof::StudyMode::Simple;
  cfg.hypotheses = {"fr3"};
  cfg.sample_sizes = {100};
  cfg.replicates = 300;
  cfg.n_boot = 500;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.seed = 707;
  const auto rows = fgof::run_study(cfg);
  const double rate = rows.at(0).value;
  report(7, "simple-test power under the strong linear deviation (reference 0.973)", rate >= 0.93,
         "rejection rate " + fmt(rate) + " at M=300, B=500");
}

void criterion_estimation_error() {
  fgof::StudyConfig cfg;
  cfg.scenario = fgof::make_scenario(fgof::ScenarioId::S1, false);
  cfg.mode = fgof::StudyMode::Estimation;
  cfg.sample_sizes = {100};
  cfg.fixed_p = 2;
  cfg.fixed_q = 1;
  cfg.replicates = 200;
  cfg.estimator.kind = fgof::EstimatorKind::Fpcr;
  cfg.seed = 808;
  const double err_small = fgof::run_study(cfg).at(0).value;
  const bool small_ok = err_small >= 0.303 * 0.85 && err_small <= 0.303 * 1.15;

  cfg.fixed_p = 50;
  cfg.replicates = 50;
  const double err_fpcr = fgof::run_study(cfg).at(0).value;
  cfg.estimator.kind = fgof::EstimatorKind::L1s;
  cfg.estimator.lambda_policy = fgof::LambdaPolicy::Cv;
  const double err_l1s = fgof::run_study(cfg).at(0).value;
  const bool ratio_ok = err_fpcr >= 5.0 * err_l1s;

  report(8, "kernel estimation errors (reference 0.303; overfit ratio >= 5)",
         small_ok && ratio_ok,
         "mean error " + fmt(err_small) + " at (p,q)=(2,1); at p=50 unpenalized " + fmt(err_fpcr) +
             " vs select-refit " + fmt(err_l1s));
}

void criterion_golden_moments() {
  fgof::Rng rng(909);
  const double sqrt5 = std::sqrt(5.0);
  const double lo = (1.0 - sqrt5) / 2.0, hi = (1.0 + sqrt5) / 2.0;
  const Eigen::Index n = 1'000'000;
  Eigen::VectorXd v = fgof::golden_multipliers(n, rng);
  bool support_ok = true;
  for (Eigen::Index i = 0; i < n; ++i) support_ok = support_ok && (v(i) == lo || v(i) == hi);
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double third = v.array().pow(3).mean();
  const bool ok = support_ok && std::abs(mean) <= 0.005 && std::abs(var - 1.0) <= 0.01 &&
                  std::abs(third - 1.0) <= 0.02;
  report(9, "golden-section multiplier moments", ok,
         "mean " + fmt(mean) + ", var " + fmt(var) + ", third " + fmt(third) + ", support " +
             (support_ok ? "two points" : "BROKEN"));
}

void criterion_hat_fast_path() {
  fgof::Rng rng(111);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 10 + static_cast<Eigen::Index>(rng.below(15));
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(rng.below(3));
    Eigen::MatrixXd x = randn(n, p, rng);
    Eigen::MatrixXd b0 = randn(p, 2, rng);
    Eigen::MatrixXd y = x * b0 + 0.4 * randn(n, 2, rng);
    for (bool l1s : {false, true}) {
      fgof::Fit fit = l1s ? fgof::fit_l1s(x, y, 0.05) : fgof::fit_fpcr(x, y);
      Eigen::VectorXd v = fgof::golden_multipliers(n, rng);
      Eigen::MatrixXd y_star = x * fit.coef + (fit.residuals.array().colwise() * v.array()).matrix();
      y_star.rowwise() -= y_star.colwise().mean();
      const Eigen::MatrixXd fast = y_star - (*fit.hat) * y_star;
      if (fit.selected_rows.empty()) {
        worst = std::max(worst, (fast - y_star).cwiseAbs().maxCoeff());
        continue;
      }
      Eigen::MatrixXd xs(n, static_cast<Eigen::Index>(fit.selected_rows.size()));
      for (std::size_t c = 0; c < fit.selected_rows.size(); ++c)
        xs.col(static_cast<Eigen::Index>(c)) = x.col(fit.selected_rows[c]);
      const Eigen::MatrixXd slow = fgof::fit_fpcr(xs, y_star).residuals;
      worst = std::max(worst, (fast - slow).cwiseAbs().maxCoeff());
    }
  }
  report(10, "hat-matrix bootstrap fast path equals refitting", worst <= 1e-8,
         "max deviation " + fmt(worst));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FGOF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string strip_wall_time_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream out;
  std::string line;
  while (std::getline(in, line))
    if (line.find("wall_time") == std::string::npos) out << line << "\n";
  return out.str();
}

void criterion_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("fgof_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto file = [&](const char* name) { return (dir / name).string(); };

  // a small curve fixture written by the simulator
  auto sc = fgof::make_scenario(fgof::ScenarioId::S1, false, 61);
  auto x = fgof::simulate(sc.covariate, sc.grid_x, 40, 31415);
  auto e = fgof::simulate(sc.error, sc.grid_y, 40, 27182);
  fgof::write_curves_csv(file("x.csv"), x);
  fgof::write_curves_csv(file("y.csv"), e);

  bool ok = true;
  const std::string test_base = "test --x " + file("x.csv") + " --y " + file("y.csv") +
                                " --estimator l1s --B 200 --seed 2024 ";
  ok = ok && run_cli(test_base + "--threads 1 --out " + file("r1.txt") + " --boot-out " +
                     file("b1.csv")) == 0;
  ok = ok && run_cli(test_base + "--threads 4 --out " + file("r2.txt") + " --boot-out " +
                     file("b2.csv")) == 0;
  ok = ok && strip_wall_time_file(file("r1.txt")) == strip_wall_time_file(file("r2.txt"));
  ok = ok && strip_wall_time_file(file("b1.csv")) == strip_wall_time_file(file("b2.csv"));

  const std::string sim_base =
      "simulate --scenario s1 --mode simple --hypothesis ne,fr2 --n 20 --M 6 --B 50"
      " --estimator fpcr --grid-points 41 --seed 99 ";
  ok = ok && run_cli(sim_base + "--threads 1 --out " + file("t1.csv")) == 0;
  ok = ok && run_cli(sim_base + "--threads 4 --out " + file("t2.csv")) == 0;
  ok = ok && strip_wall_time_file(file("t1.csv")) == strip_wall_time_file(file("t2.csv"));

  std::error_code ec;
  fs::remove_all(dir, ec);
  report(11, "seeded runs are byte-identical across thread counts", ok,
         ok ? "test and simulate payloads match" : "payload mismatch or nonzero exit");
}

void criterion_complexity() {
  fgof::Rng rng(121);
  const Eigen::Index p = 2, q = 2;
  std::vector<double> per_n3;
  std::string detail;
  for (Eigen::Index n : {50, 100, 200}) {
    Eigen::MatrixXd x = randn(n, p, rng);
    Eigen::MatrixXd e = randn(n, q, rng);
    // repeat to a stable wall time; single-threaded to keep the scaling clean
    int reps = 0;
    double elapsed = 0;
    const auto t0 = std::chrono::steady_clock::now();
    do {
      auto a = fgof::adot(x, -1.0, 1);
      volatile double sink = fgof::pcvm_statistic(e, a).value;
      (void)sink;
      ++reps;
      elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } while (elapsed < 0.5);
    const double per_call = elapsed / reps;
    per_n3.push_back(per_call / (static_cast<double>(n) * n * n));
    detail += (detail.empty() ? "" : ", ") + std::to_string(n) + ":" + fmt(per_call) + "s";
  }
  const double lo = *std::min_element(per_n3.begin(), per_n3.end());
  const double hi = *std::max_element(per_n3.begin(), per_n3.end());
  report(12, "statistic evaluation scales cubically", hi <= 2.0 * lo,
         detail + "; t/n^3 spread factor " + fmt(hi / lo));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  guarded(1, "closed-form statistic vs Monte Carlo functional", criterion_statistic_vs_oracle);
  guarded(2, "wedge angles vs Monte Carlo sphere areas", criterion_wedge_vs_oracle);
  guarded(3, "sphere quadratic-integral identity", criterion_sphere_integral);
  guarded(4, "angle matrix positive definite", criterion_positive_definite);
  guarded(5, "scalar-response reduction", criterion_scalar_reduction);
  guarded(6, "composite-test size at the null", criterion_size_reproduction);
  guarded(7, "simple-test power", criterion_power_reproduction);
  guarded(8, "kernel estimation errors", criterion_estimation_error);
  guarded(9, "golden-section multiplier moments", criterion_golden_moments);
  guarded(10, "hat-matrix bootstrap fast path", criterion_hat_fast_path);
  guarded(11, "determinism across thread counts", criterion_determinism);
  guarded(12, "cubic complexity envelope", criterion_complexity);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d/12 criteria passed in %.1f s\n", 12 - failures, wall);
  return failures == 0 ? 0 : 1;
}
