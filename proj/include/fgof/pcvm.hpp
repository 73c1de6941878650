#ifndef FGOF_PCVM_HPP
#define FGOF_PCVM_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fgof/gram.hpp"
#include "fgof/parallel.hpp"

namespace fgof {

namespace detail {
// Angle between unit vectors via 2 atan2(|u - v|, |u + v|); algebraically
// arccos(u'v) but stable when the cosine sits at +-1.
template <typename Scalar, typename DerivedU, typename DerivedV>
Scalar unit_angle(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
  return Scalar(2) * std::atan2((u - v).norm(), (u + v).norm());
}
}  // namespace detail

/// Solid angle (in [0, 2pi]) of the spherical wedge cut by the two
/// half-spaces {z : (xi-xr)'z <= 0} and {z : (xj-xr)'z <= 0}.
///
/// Coincidences are resolved by the distance of the difference vectors:
/// both differences null -> the whole sphere (2pi); exactly one null -> a
/// hemisphere (pi); otherwise pi minus the angle between the differences,
/// which also covers xi == xj != xr continuously (value pi).
template <typename Scalar, typename DerivedI, typename DerivedJ, typename DerivedR>
Scalar wedge_angle(const Eigen::MatrixBase<DerivedI>& xi, const Eigen::MatrixBase<DerivedJ>& xj,
                   const Eigen::MatrixBase<DerivedR>& xr, Scalar tie_tol) {
  const auto u = (xi - xr).eval();
  const auto v = (xj - xr).eval();
  const Scalar di = u.norm();
  const Scalar dj = v.norm();
  const bool i_at_r = di <= tie_tol;
  const bool j_at_r = dj <= tie_tol;
  if (i_at_r && j_at_r) return Scalar(2) * Scalar(M_PI);
  if (i_at_r || j_at_r) return Scalar(M_PI);
  return Scalar(M_PI) - detail::unit_angle<Scalar>(u / di, v / dj);
}

/// Default coincidence tolerance for score rows: 1e-10 relative to the
/// largest row norm, so exact grid duplicates collapse and roundoff does not.
template <typename Scalar>
Scalar default_tie_tol(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& scores) {
  const Scalar max_norm = scores.rows() > 0 ? scores.rowwise().norm().maxCoeff() : Scalar(0);
  return Scalar(1e-10) * (Scalar(1) + max_norm);
}

/// Symmetric n x n matrix of summed wedge angles, (A)_ij = sum_r over the
/// sample of wedge_angle(x_i, x_j, x_r). The entries are plain angular sums;
/// every dimensional constant lives in the statistic itself.
template <typename Scalar>
struct AdotMatrix {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;  // n x n
  Eigen::Index ambient_dim = 0;                                  // p used to build it

  Eigen::Index n() const { return values.rows(); }
};

/// Builds the wedge-angle sum matrix in O(p n^3 / 2) time after an O(n^2 p)
/// precomputation of normalized pairwise differences; rows are processed
/// independently so the computation parallelizes deterministically.
template <typename Scalar>
AdotMatrix<Scalar> adot(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& scores,
                        Scalar tie_tol = Scalar(-1), int threads = 0) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = scores.rows();
  const Eigen::Index p = scores.cols();
  if (n < 1 || p < 1) throw std::invalid_argument("adot: empty score matrix");
  if (!scores.allFinite()) throw std::invalid_argument("adot: non-finite scores");
  if (tie_tol < Scalar(0)) tie_tol = default_tie_tol(scores);

  // unit(i, r) = (x_i - x_r) / |x_i - x_r|, flattened row-major over (i, r);
  // tied(i, r) marks pairs closer than the coincidence tolerance
  Matrix unit(static_cast<Eigen::Index>(n) * n, p);
  std::vector<char> tied(static_cast<std::size_t>(n) * n);
  parallel_for(
      n,
      [&](std::int64_t i) {
        for (Eigen::Index r = 0; r < n; ++r) {
          const auto diff = (scores.row(i) - scores.row(r)).eval();
          const Scalar d = diff.norm();
          const bool tie = d <= tie_tol;
          tied[static_cast<std::size_t>(i) * n + r] = tie ? 1 : 0;
          unit.row(i * n + r) = tie ? diff : (diff / d).eval();
        }
      },
      threads);

  AdotMatrix<Scalar> out;
  out.ambient_dim = p;
  out.values.setZero(n, n);
  const Scalar pi = Scalar(M_PI);
  const auto fill_row = [&](Eigen::Index i) {
    for (Eigen::Index j = i; j < n; ++j) {
      Scalar acc = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        const bool i_at_r = tied[static_cast<std::size_t>(i) * n + r] != 0;
        const bool j_at_r = tied[static_cast<std::size_t>(j) * n + r] != 0;
        if (i_at_r && j_at_r)
          acc += Scalar(2) * pi;
        else if (i_at_r || j_at_r)
          acc += pi;
        else
          acc += pi - detail::unit_angle<Scalar>(unit.row(i * n + r), unit.row(j * n + r));
      }
      out.values(i, j) = acc;
      out.values(j, i) = acc;
    }
  };
  // pair the longest row with the shortest so every task carries equal work
  parallel_for(
      (n + 1) / 2,
      [&](std::int64_t k) {
        fill_row(static_cast<Eigen::Index>(k));
        const Eigen::Index mirror = n - 1 - static_cast<Eigen::Index>(k);
        if (mirror > k) fill_row(mirror);
      },
      threads);
  return out;
}

/// Surface area of the unit sphere in R^p, 2 pi^{p/2} / Gamma(p/2).
/// For p = 1 this is the counting measure of {-1, +1}, i.e. 2.
template <typename Scalar = double>
Scalar sphere_surface_area(Eigen::Index p) {
  if (p < 1) throw std::invalid_argument("sphere_surface_area: dimension must be positive");
  const double pd = static_cast<double>(p);
  return Scalar(2) * static_cast<Scalar>(std::exp(0.5 * pd * std::log(M_PI) - std::lgamma(0.5 * pd)));
}

/// Value of the sphere integral of (x'w)(y'w) per unit of x'y:
/// 2 pi^{q/2} / (q Gamma(q/2)).
template <typename Scalar = double>
Scalar sphere_quadratic_constant(Eigen::Index q) {
  if (q < 1) throw std::invalid_argument("sphere_quadratic_constant: dimension must be positive");
  return sphere_surface_area<Scalar>(q) / static_cast<Scalar>(q);
}

/// Projected Cramer-von Mises statistic value together with the dimensions it
/// was computed at.
struct PcvmValue {
  double value = 0;
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  Eigen::Index n = 0;
};

namespace detail {
// Leading constant of the statistic for angular wedge sums:
// 2 pi^{p/2 + q/2 - 1} / (q Gamma(p/2) Gamma(q/2)).
template <typename Scalar>
Scalar pcvm_constant(Eigen::Index p, Eigen::Index q) {
  const double pd = static_cast<double>(p);
  const double qd = static_cast<double>(q);
  const double log_c = std::log(2.0) + (0.5 * (pd + qd) - 1.0) * std::log(M_PI) - std::log(qd) -
                       std::lgamma(0.5 * pd) - std::lgamma(0.5 * qd);
  return static_cast<Scalar>(std::exp(log_c));
}
}  // namespace detail

/// Statistic for residual scores expressed in orthonormal bases:
///   (1/n^2) * c(p, q) * Tr[E' A E],
/// with A the angular wedge sums of the covariate scores.
template <typename Scalar>
PcvmValue pcvm_statistic(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& residual_scores,
                         const AdotMatrix<Scalar>& adot_matrix) {
  const Eigen::Index n = residual_scores.rows();
  const Eigen::Index q = residual_scores.cols();
  const Eigen::Index p = adot_matrix.ambient_dim;
  if (n != adot_matrix.n())
    throw std::invalid_argument("pcvm_statistic: residual rows do not match the angle matrix");
  if (q < 1) throw std::invalid_argument("pcvm_statistic: residual scores need at least one column");

  const Scalar quad = (residual_scores.transpose() * adot_matrix.values * residual_scores).trace();
  const Scalar value = detail::pcvm_constant<Scalar>(p, q) * quad /
                       (static_cast<Scalar>(n) * static_cast<Scalar>(n));
  return PcvmValue{static_cast<double>(std::max<Scalar>(Scalar(0), value)), p, q, n};
}

/// Statistic for scores expressed in general (non-orthonormal) bases.
///
/// Scores are mapped to orthonormal coordinates through the Cholesky factors
/// of the basis Gram matrices: residual rows e -> Q e, and the angle matrix
/// must be built from the covariate rows transformed the same way,
/// adot(X * P'). Under that isometry the statistic coincides exactly with the
/// orthonormal-basis statistic of the same data, and identity factors reduce
/// it to pcvm_statistic unchanged.
template <typename Scalar>
PcvmValue pcvm_statistic_general(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& residual_scores,
    const GramFactor<Scalar>& response_factor, const GramFactor<Scalar>& covariate_factor,
    const AdotMatrix<Scalar>& adot_matrix) {
  if (response_factor.size() != residual_scores.cols())
    throw std::invalid_argument("pcvm_statistic_general: response factor size mismatch");
  if (covariate_factor.size() != adot_matrix.ambient_dim)
    throw std::invalid_argument("pcvm_statistic_general: covariate factor size mismatch");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> iso =
      residual_scores * response_factor.cholesky.transpose();
  return pcvm_statistic(iso, adot_matrix);
}

/// Scalar-response statistic (q = 1), written as an explicit double sum.
/// Kept as an independent code path against which the general implementation
/// is checked.
template <typename Scalar>
PcvmValue pcvm_statistic_scalar_response(const Eigen::Vector<Scalar, Eigen::Dynamic>& residuals,
                                         const AdotMatrix<Scalar>& adot_matrix) {
  const Eigen::Index n = residuals.size();
  if (n != adot_matrix.n())
    throw std::invalid_argument("pcvm_statistic_scalar_response: size mismatch");
  const Eigen::Index p = adot_matrix.ambient_dim;
  Scalar quad = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      quad += residuals(i) * adot_matrix.values(i, j) * residuals(j);
  const Scalar value =
      detail::pcvm_constant<Scalar>(p, 1) * quad / (static_cast<Scalar>(n) * static_cast<Scalar>(n));
  return PcvmValue{static_cast<double>(std::max<Scalar>(Scalar(0), value)), p, 1, n};
}

}  // namespace fgof

#endif
