#ifndef FGOF_FUNCTIONAL_SAMPLE_HPP
#define FGOF_FUNCTIONAL_SAMPLE_HPP

#include <Eigen/Core>

#include <stdexcept>
#include <utility>

#include "fgof/grid.hpp"

namespace fgof {

/// n curves evaluated on a shared grid; row i of values is curve i.
template <typename Scalar>
struct FunctionalSample {
  Grid<Scalar> grid;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;  // n x m

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index m() const { return values.cols(); }
};

template <typename Scalar>
FunctionalSample<Scalar> make_sample(Grid<Scalar> grid,
                                     Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values) {
  if (values.cols() != grid.size())
    throw std::invalid_argument("make_sample: value columns (" + std::to_string(values.cols()) +
                                ") do not match grid size (" + std::to_string(grid.size()) + ")");
  if (!values.allFinite())
    throw std::invalid_argument("make_sample: sample contains non-finite values");
  return FunctionalSample<Scalar>{std::move(grid), std::move(values)};
}

/// Subtracts the pointwise sample mean from every curve. Returns the centered
/// sample and the mean curve; centering an already-centered sample is a no-op.
template <typename Scalar>
std::pair<FunctionalSample<Scalar>, Eigen::Vector<Scalar, Eigen::Dynamic>> center(
    const FunctionalSample<Scalar>& sample) {
  if (sample.n() < 1) throw std::invalid_argument("center: empty sample");
  Eigen::Vector<Scalar, Eigen::Dynamic> mean = sample.values.colwise().mean();
  FunctionalSample<Scalar> out{sample.grid, sample.values.rowwise() - mean.transpose()};
  return {std::move(out), std::move(mean)};
}

}  // namespace fgof

#endif
