#ifndef FGOF_GRID_HPP
#define FGOF_GRID_HPP

#include <Eigen/Core>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fgof {

enum class QuadratureRule { Trapezoid, Simpson };

/// Discretization of an interval [lower, upper] together with quadrature
/// weights. All L2 geometry in the library (inner products, norms, FPC
/// orthonormality) is defined through these weights.
template <typename Scalar>
struct Grid {
  Scalar lower = 0;
  Scalar upper = 1;
  Eigen::Vector<Scalar, Eigen::Dynamic> nodes;
  Eigen::Vector<Scalar, Eigen::Dynamic> weights;

  Eigen::Index size() const { return nodes.size(); }
  Scalar length() const { return upper - lower; }
  Scalar step() const { return (upper - lower) / static_cast<Scalar>(nodes.size() - 1); }

  bool approx_equal(const Grid& other, Scalar tol = Scalar(1e-12)) const {
    if (nodes.size() != other.nodes.size()) return false;
    const Scalar scale = std::max<Scalar>(Scalar(1), std::abs(upper - lower));
    return std::abs(lower - other.lower) <= tol * scale &&
           std::abs(upper - other.upper) <= tol * scale &&
           (nodes - other.nodes).cwiseAbs().maxCoeff() <= tol * scale;
  }
};

/// Equispaced grid on [lower, upper] with composite trapezoid weights
/// (h/2, h, ..., h, h/2), or composite Simpson weights when requested
/// (Simpson needs an odd number of nodes).
template <typename Scalar = double>
Grid<Scalar> make_grid(Scalar lower, Scalar upper, Eigen::Index m,
                       QuadratureRule rule = QuadratureRule::Trapezoid) {
  if (m < 2) throw std::invalid_argument("make_grid: need at least 2 nodes, got " + std::to_string(m));
  if (!(lower < upper)) {
    std::ostringstream msg;
    msg << "make_grid: lower (" << lower << ") must be below upper (" << upper << ")";
    throw std::invalid_argument(msg.str());
  }
  Grid<Scalar> g;
  g.lower = lower;
  g.upper = upper;
  g.nodes = Eigen::Vector<Scalar, Eigen::Dynamic>::LinSpaced(m, lower, upper);
  const Scalar h = (upper - lower) / static_cast<Scalar>(m - 1);
  g.weights.setConstant(m, h);
  if (rule == QuadratureRule::Trapezoid) {
    g.weights(0) = h / 2;
    g.weights(m - 1) = h / 2;
  } else {
    if (m % 2 == 0)
      throw std::invalid_argument("make_grid: Simpson rule needs an odd node count, got " +
                                  std::to_string(m));
    for (Eigen::Index i = 1; i + 1 < m; ++i)
      g.weights(i) = (i % 2 == 1) ? Scalar(4) * h / 3 : Scalar(2) * h / 3;
    g.weights(0) = h / 3;
    g.weights(m - 1) = h / 3;
  }
  return g;
}

/// Grid over explicit (strictly increasing, possibly non-equispaced) nodes
/// with trapezoid weights; the boundary cells stretch to the interval
/// endpoints when those extend past the first and last node.
template <typename Scalar = double>
Grid<Scalar> grid_from_nodes(Eigen::Vector<Scalar, Eigen::Dynamic> nodes, Scalar lower, Scalar upper) {
  const Eigen::Index m = nodes.size();
  if (m < 2) throw std::invalid_argument("grid_from_nodes: need at least 2 nodes");
  for (Eigen::Index i = 1; i < m; ++i)
    if (!(nodes(i) > nodes(i - 1)))
      throw std::invalid_argument("grid_from_nodes: nodes not strictly increasing at position " +
                                  std::to_string(i + 1));
  if (lower > nodes(0) || upper < nodes(m - 1))
    throw std::invalid_argument("grid_from_nodes: endpoints do not cover the nodes");
  Grid<Scalar> g;
  g.lower = lower;
  g.upper = upper;
  g.weights.resize(m);
  g.weights(0) = (nodes(0) - lower) + (nodes(1) - nodes(0)) / 2;
  g.weights(m - 1) = (upper - nodes(m - 1)) + (nodes(m - 1) - nodes(m - 2)) / 2;
  for (Eigen::Index i = 1; i + 1 < m; ++i) g.weights(i) = (nodes(i + 1) - nodes(i - 1)) / 2;
  g.nodes = std::move(nodes);
  return g;
}

template <typename Scalar = double>
Grid<Scalar> grid_from_nodes(Eigen::Vector<Scalar, Eigen::Dynamic> nodes) {
  const Scalar lower = nodes(0);
  const Scalar upper = nodes(nodes.size() - 1);
  return grid_from_nodes(std::move(nodes), lower, upper);
}

/// Quadrature L2 inner product of two grid functions.
template <typename Scalar, typename DerivedF, typename DerivedG>
Scalar inner_product(const Eigen::MatrixBase<DerivedF>& f, const Eigen::MatrixBase<DerivedG>& g,
                     const Grid<Scalar>& grid) {
  if (f.size() != grid.size() || g.size() != grid.size())
    throw std::invalid_argument("inner_product: vector length does not match grid size");
  return (f.array() * g.array() * grid.weights.array()).sum();
}

template <typename Scalar, typename Derived>
Scalar squared_norm(const Eigen::MatrixBase<Derived>& f, const Grid<Scalar>& grid) {
  return inner_product(f, f, grid);
}

template <typename Scalar, typename Derived>
Scalar l2_norm(const Eigen::MatrixBase<Derived>& f, const Grid<Scalar>& grid) {
  return std::sqrt(std::max<Scalar>(Scalar(0), squared_norm(f, grid)));
}

}  // namespace fgof

#endif
