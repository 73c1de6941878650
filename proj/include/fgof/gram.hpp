#ifndef FGOF_GRAM_HPP
#define FGOF_GRAM_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

#include "fgof/grid.hpp"

namespace fgof {

/// Gram matrix of a (possibly non-orthonormal) truncated basis under the grid
/// inner product, with its upper-triangular Cholesky factor U (gram = U'U)
/// and log det U. For an orthonormal basis both matrices are the identity and
/// the log determinant is zero.
template <typename Scalar>
struct GramFactor {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cholesky;  // upper triangular
  Scalar log_det_cholesky = 0;

  Eigen::Index size() const { return gram.rows(); }

  static GramFactor identity(Eigen::Index k) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    return GramFactor{Matrix::Identity(k, k), Matrix::Identity(k, k), Scalar(0)};
  }
};

/// Gram factor of k basis functions given as rows over the grid. Rejects
/// numerically rank-deficient bases (smallest eigenvalue below 1e-12 of the
/// largest).
template <typename Scalar>
GramFactor<Scalar> gram_factor(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& basis_functions,
    const Grid<Scalar>& grid) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (basis_functions.cols() != grid.size())
    throw std::invalid_argument("gram_factor: basis function columns do not match grid size");

  GramFactor<Scalar> out;
  out.gram = basis_functions * grid.weights.asDiagonal() * basis_functions.transpose();
  out.gram = ((out.gram + out.gram.transpose()) / Scalar(2)).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> es(out.gram);
  const Scalar lo = es.eigenvalues().minCoeff();
  const Scalar hi = es.eigenvalues().maxCoeff();
  if (!(hi > Scalar(0)) || lo < Scalar(1e-12) * hi)
    throw std::runtime_error("gram_factor: basis is numerically rank deficient (eigenvalue ratio " +
                             std::to_string(static_cast<double>(lo / std::max(hi, Scalar(1e-300)))) +
                             ")");

  Eigen::LLT<Matrix> llt(out.gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gram_factor: Cholesky factorization failed");
  out.cholesky = llt.matrixU();
  out.log_det_cholesky = out.cholesky.diagonal().array().log().sum();
  return out;
}

}  // namespace fgof

#endif
