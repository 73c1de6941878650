#ifndef FGOF_FPC_HPP
#define FGOF_FPC_HPP

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fgof/functional_sample.hpp"
#include "fgof/grid.hpp"

namespace fgof {

/// Empirical functional principal components of a centered sample:
/// mean curve, eigenfunctions (rows, orthonormal under the grid quadrature
/// inner product), eigenvalues in nonincreasing order, and the cumulative
/// explained-variance profile relative to the total sample variance.
template <typename Scalar>
struct FpcBasis {
  Grid<Scalar> grid;
  Eigen::Vector<Scalar, Eigen::Dynamic> mean;                           // length m
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenfunctions; // k x m
  Eigen::Vector<Scalar, Eigen::Dynamic> eigenvalues;                    // length k
  Eigen::Vector<Scalar, Eigen::Dynamic> cum_ev;                         // length k

  Eigen::Index size() const { return eigenfunctions.rows(); }
};

/// Coefficients of n curves in a truncated basis; row i holds the scores of
/// curve i. The basis pointer is informational (grids and truncation checks);
/// numeric kernels operate on the scores matrix directly.
template <typename Scalar>
struct ScoreMatrix {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> scores;  // n x k
  const FpcBasis<Scalar>* basis = nullptr;

  Eigen::Index n() const { return scores.rows(); }
  Eigen::Index k() const { return scores.cols(); }
};

/// Functional principal component decomposition of a centered sample.
///
/// The eigenproblem is made symmetric by conjugating the 1/n covariance of
/// the curve values with the square root of the quadrature weights: the
/// eigenvectors of W^{1/2} C W^{1/2} mapped back through W^{-1/2} are
/// orthonormal in the quadrature inner product, and the eigenvalues equal the
/// 1/n variances of the score columns. Signs are fixed by making the entry of
/// largest magnitude positive.
template <typename Scalar>
std::pair<FpcBasis<Scalar>, ScoreMatrix<Scalar>> fpc(const FunctionalSample<Scalar>& sample,
                                                     Eigen::Index k_max) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;
  const Eigen::Index n = sample.n();
  const Eigen::Index m = sample.m();
  if (k_max < 1 || k_max > std::min(n, m))
    throw std::invalid_argument("fpc: k_max must lie in [1, min(n, m)]");

  const Scalar scale = std::max<Scalar>(Scalar(1), sample.values.cwiseAbs().maxCoeff());
  const Scalar centering_tol =
      std::max<Scalar>(Scalar(1e-8), Scalar(100) * std::numeric_limits<Scalar>::epsilon());
  const Scalar worst_mean = sample.values.colwise().mean().cwiseAbs().maxCoeff();
  if (worst_mean > centering_tol * scale)
    throw std::invalid_argument("fpc: sample is not centered (max column mean " +
                                std::to_string(static_cast<double>(worst_mean)) + ")");

  const Vector w_sqrt = sample.grid.weights.cwiseSqrt();
  // M = W^{1/2} (V'V/n) W^{1/2}, symmetric PSD of size m x m.
  Matrix vw = sample.values * w_sqrt.asDiagonal();
  Matrix weighted_cov = (vw.transpose() * vw) / static_cast<Scalar>(n);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(weighted_cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fpc: eigendecomposition failed");
  const Scalar total_variance = weighted_cov.trace();

  // Solver order is ascending; stable-sort descending, ties by original index.
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()(a) > solver.eigenvalues()(b);
  });

  FpcBasis<Scalar> basis;
  basis.grid = sample.grid;
  basis.mean = Vector::Zero(m);
  basis.eigenfunctions.resize(k_max, m);
  basis.eigenvalues.resize(k_max);
  basis.cum_ev.resize(k_max);

  const Vector w_inv_sqrt =
      sample.grid.weights.unaryExpr([](Scalar w) { return w > Scalar(0) ? Scalar(1) / std::sqrt(w) : Scalar(0); });
  Scalar running = 0;
  for (Eigen::Index j = 0; j < k_max; ++j) {
    const Eigen::Index src = order[j];
    basis.eigenvalues(j) = std::max<Scalar>(Scalar(0), solver.eigenvalues()(src));
    Vector psi = solver.eigenvectors().col(src).cwiseProduct(w_inv_sqrt);
    const Scalar nrm = l2_norm(psi, sample.grid);
    if (nrm > Scalar(0)) psi /= nrm;
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    if (psi(imax) < Scalar(0)) psi = -psi;
    basis.eigenfunctions.row(j) = psi.transpose();
    running += basis.eigenvalues(j);
    basis.cum_ev(j) =
        total_variance > Scalar(0) ? std::min<Scalar>(Scalar(1), running / total_variance) : Scalar(1);
  }

  ScoreMatrix<Scalar> scores;
  scores.scores = sample.values * sample.grid.weights.asDiagonal() * basis.eigenfunctions.transpose();
  scores.basis = nullptr;  // caller owns the basis; set after the pair is stored
  return {std::move(basis), std::move(scores)};
}

/// Smallest truncation k whose cumulative explained variance reaches the
/// threshold; falls back to the full basis if the threshold is never met.
template <typename Scalar>
Eigen::Index truncate_by_ev(const FpcBasis<Scalar>& basis, Scalar threshold) {
  if (!(threshold > Scalar(0)) || threshold > Scalar(1))
    throw std::invalid_argument("truncate_by_ev: threshold must lie in (0, 1]");
  for (Eigen::Index j = 0; j < basis.cum_ev.size(); ++j)
    if (basis.cum_ev(j) >= threshold) return j + 1;
  return basis.cum_ev.size();
}

/// Scores of a sample on the first k eigenfunctions of a basis sharing its grid.
template <typename Scalar>
ScoreMatrix<Scalar> project(const FunctionalSample<Scalar>& sample, const FpcBasis<Scalar>& basis,
                            Eigen::Index k) {
  if (!sample.grid.approx_equal(basis.grid))
    throw std::invalid_argument("project: sample and basis grids differ");
  if (k < 1 || k > basis.size()) throw std::invalid_argument("project: invalid truncation");
  ScoreMatrix<Scalar> out;
  out.scores =
      sample.values * sample.grid.weights.asDiagonal() * basis.eigenfunctions.topRows(k).transpose();
  out.basis = &basis;
  return out;
}

/// Linear combination of eigenfunctions; inverse of project on the basis span.
template <typename Scalar>
FunctionalSample<Scalar> reconstruct(const ScoreMatrix<Scalar>& scores,
                                     const FpcBasis<Scalar>& basis) {
  if (scores.k() > basis.size())
    throw std::invalid_argument("reconstruct: more score columns than basis functions");
  FunctionalSample<Scalar> out;
  out.grid = basis.grid;
  out.values = scores.scores * basis.eigenfunctions.topRows(scores.k());
  return out;
}

}  // namespace fgof

#endif
