#ifndef FGOF_ORACLE_HPP
#define FGOF_ORACLE_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fgof/parallel.hpp"
#include "fgof/pcvm.hpp"
#include "fgof/rng.hpp"

namespace fgof {

/// Monte Carlo estimate with its standard error. Assertions against oracles
/// should use multiples of se, never fixed absolute tolerances.
struct McEstimate {
  double estimate = 0;
  double se = 0;
  std::int64_t draws = 0;
};

/// Uniform sampler on the unit sphere of R^p via normalized Gaussians.
/// For p = 1 the "sphere" is {-1, +1} and points are drawn by a fair coin.
class SphereSampler {
 public:
  explicit SphereSampler(Eigen::Index p) : p_(p) {
    if (p < 1) throw std::invalid_argument("SphereSampler: dimension must be positive");
  }

  Eigen::VectorXd draw(Rng& rng) const {
    Eigen::VectorXd z(p_);
    if (p_ == 1) {
      z(0) = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      return z;
    }
    double norm2 = 0;
    do {
      for (Eigen::Index i = 0; i < p_; ++i) z(i) = rng.normal();
      norm2 = z.squaredNorm();
    } while (norm2 == 0);
    return z / std::sqrt(norm2);
  }

  Eigen::Index dimension() const { return p_; }

 private:
  Eigen::Index p_;
};

namespace detail {

// Batched MC accumulation: batch b draws from substream (seed, b) and batches
// combine in index order, so the estimate is identical for any thread count.
template <typename BatchValue>
McEstimate accumulate_batches(std::int64_t draws, std::int64_t batch_size, std::uint64_t seed,
                              const BatchValue& value_of_draw) {
  const std::int64_t n_batches = (draws + batch_size - 1) / batch_size;
  std::vector<double> sums(n_batches, 0.0), sumsqs(n_batches, 0.0);
  parallel_for(n_batches, [&](std::int64_t b) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(b));
    const std::int64_t lo = b * batch_size;
    const std::int64_t hi = std::min(draws, lo + batch_size);
    double s = 0, s2 = 0;
    for (std::int64_t d = lo; d < hi; ++d) {
      const double v = value_of_draw(rng);
      s += v;
      s2 += v * v;
    }
    sums[b] = s;
    sumsqs[b] = s2;
  });
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  const double total2 = std::accumulate(sumsqs.begin(), sumsqs.end(), 0.0);
  const double mean = total / static_cast<double>(draws);
  const double var = std::max(0.0, total2 / static_cast<double>(draws) - mean * mean);
  McEstimate out;
  out.estimate = mean;
  out.se = std::sqrt(var / static_cast<double>(draws));
  out.draws = draws;
  return out;
}

}  // namespace detail

/// Surface-area estimate of the spherical region behind A_ijr: the fraction
/// of uniform sphere points z with (xi-xr)'z <= 0 and (xj-xr)'z <= 0, scaled
/// by the total sphere area. A null difference vector satisfies its
/// constraint identically, which reproduces the coincidence cases.
inline McEstimate mc_wedge_area(const Eigen::VectorXd& xi, const Eigen::VectorXd& xj,
                                const Eigen::VectorXd& xr, std::int64_t draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("mc_wedge_area: need at least one draw");
  const Eigen::Index p = xi.size();
  if (xj.size() != p || xr.size() != p) throw std::invalid_argument("mc_wedge_area: dimension mismatch");
  const Eigen::VectorXd u = xi - xr;
  const Eigen::VectorXd v = xj - xr;
  const double area = sphere_surface_area<double>(p);
  SphereSampler sampler(p);
  McEstimate hit = detail::accumulate_batches(draws, 1 << 14, seed, [&](Rng& rng) {
    const Eigen::VectorXd z = sampler.draw(rng);
    return (u.dot(z) <= 0.0 && v.dot(z) <= 0.0) ? 1.0 : 0.0;
  });
  // binomial standard error on the hit fraction, scaled to area units
  const double phat = hit.estimate;
  McEstimate out;
  out.estimate = area * phat;
  out.se = area * std::sqrt(std::max(0.0, phat * (1.0 - phat)) / static_cast<double>(draws));
  out.draws = draws;
  return out;
}

namespace detail {

// One projected-residual evaluation: integrates the squared marked empirical
// process against the ecdf of the projected covariate scores, for fixed
// directions g and h. O(n log n) by sweeping the sorted projections.
inline double pcvm_process_value(const Eigen::MatrixXd& residual_scores, const Eigen::MatrixXd& x_scores,
                                 const Eigen::VectorXd& g, const Eigen::VectorXd& h) {
  const Eigen::Index n = x_scores.rows();
  const Eigen::VectorXd t = x_scores * g;  // jump locations
  const Eigen::VectorXd s = residual_scores * h;  // marks
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return t(a) < t(b); });
  double acc = 0, cum = 0;
  Eigen::Index k = 0;
  while (k < n) {
    // all jumps sharing a location enter the indicator together
    Eigen::Index k2 = k;
    while (k2 < n && t(order[k2]) == t(order[k])) {
      cum += s(order[k2]);
      ++k2;
    }
    const double r = cum / std::sqrt(static_cast<double>(n));
    acc += static_cast<double>(k2 - k) * r * r;
    k = k2;
  }
  return acc / static_cast<double>(n);
}

}  // namespace detail

/// Direct Monte Carlo evaluation of the projected Cramer-von Mises functional:
/// averages the squared marked empirical process over uniform directions on
/// the two spheres and over the ecdf of the projected covariate, scaled by
/// both sphere areas. Dimensions with p or q equal to 1 are enumerated
/// exactly over {-1, +1} inside each draw.
inline McEstimate mc_pcvm(const Eigen::MatrixXd& residual_scores, const Eigen::MatrixXd& x_scores,
                          std::int64_t draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("mc_pcvm: need at least one draw");
  if (residual_scores.rows() != x_scores.rows())
    throw std::invalid_argument("mc_pcvm: row count mismatch");
  const Eigen::Index p = x_scores.cols();
  const Eigen::Index q = residual_scores.cols();
  const double mass_p = p == 1 ? 2.0 : sphere_surface_area<double>(p);
  const double mass_q = q == 1 ? 2.0 : sphere_surface_area<double>(q);
  SphereSampler sample_g(p), sample_h(q);

  const auto directions = [](Eigen::Index dim, SphereSampler& sampler, Rng& rng,
                             std::vector<Eigen::VectorXd>& out) {
    out.clear();
    if (dim == 1) {
      out.push_back(Eigen::VectorXd::Constant(1, -1.0));
      out.push_back(Eigen::VectorXd::Constant(1, 1.0));
    } else {
      out.push_back(sampler.draw(rng));
    }
  };

  return detail::accumulate_batches(draws, 1 << 10, seed, [&](Rng& rng) {
    std::vector<Eigen::VectorXd> gs, hs;
    directions(p, sample_g, rng, gs);
    directions(q, sample_h, rng, hs);
    double v = 0;
    for (const auto& g : gs)
      for (const auto& h : hs) v += detail::pcvm_process_value(residual_scores, x_scores, g, h);
    // enumerated S^0 directions carry weight 1 each; sampled ones the area
    const double scale_p = p == 1 ? 1.0 : mass_p;
    const double scale_q = q == 1 ? 1.0 : mass_q;
    return v * scale_p * scale_q;
  });
}

/// Monte Carlo check of the sphere integral of (x'w)(y'w); the closed form is
/// sphere_quadratic_constant(q) * x'y. The q = 1 case is an exact two-point sum.
inline McEstimate mc_sphere_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& y, std::int64_t draws,
                            std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("mc_sphere_quadratic: need at least one draw");
  if (x.size() != y.size()) throw std::invalid_argument("mc_sphere_quadratic: dimension mismatch");
  const Eigen::Index q = x.size();
  if (q == 1) {
    McEstimate out;
    out.estimate = 2.0 * x(0) * y(0);  // (x)(y) at +1 plus (-x)(-y) at -1
    out.se = 0.0;
    out.draws = draws;
    return out;
  }
  const double area = sphere_surface_area<double>(q);
  SphereSampler sampler(q);
  return detail::accumulate_batches(draws, 1 << 14, seed, [&](Rng& rng) {
    const Eigen::VectorXd w = sampler.draw(rng);
    return area * x.dot(w) * y.dot(w);
  });
}

}  // namespace fgof

#endif
