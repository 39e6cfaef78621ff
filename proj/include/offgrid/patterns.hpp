#pragma once

#include "offgrid/core.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace offgrid {

/// M = round(N / factor).
inline Eigen::Index budget_from_factor(const ImageGrid& grid, double factor)
{
  if (!(factor >= 1.0) || !std::isfinite(factor)) {
    throw std::invalid_argument("budget_from_factor: factor must be >= 1");
  }
  return static_cast<Eigen::Index>(std::llround(static_cast<double>(grid.size()) / factor));
}

/// Variable density sampler with uniform density: M i.i.d. points on
/// [-pi, pi)^d.
inline SamplingPattern vds_uniform(const ImageGrid& grid, Eigen::Index m_count, std::uint64_t seed)
{
  if (m_count < 1) {
    throw std::invalid_argument("vds_uniform: M must be >= 1");
  }
  Rng rng(seed);
  PointMatrix pts(m_count, grid.rank());
  for (Eigen::Index i = 0; i < pts.size(); ++i) {
    pts.data()[i] = rng.uniform(-kPi, kPi);
  }
  return SamplingPattern(std::move(pts));
}

/// Radius of the low-frequency region whose measure is the fraction M/N of
/// [-pi, pi)^d: a disk for d = 2, an interval for d = 1.
inline double lf_radius(const ImageGrid& grid, Eigen::Index m_count)
{
  const double fraction = static_cast<double>(m_count) / static_cast<double>(grid.size());
  if (grid.rank() == 1) {
    return kPi * fraction;
  }
  return kTwoPi * std::sqrt(fraction / kPi);
}

/// Low-frequency pattern: M i.i.d. points uniform in the centered disk
/// (interval for d = 1) of radius lf_radius().
inline SamplingPattern lf_pattern(const ImageGrid& grid, Eigen::Index m_count, std::uint64_t seed)
{
  if (m_count < 1) {
    throw std::invalid_argument("lf_pattern: M must be >= 1");
  }
  const double r = lf_radius(grid, m_count);
  Rng rng(seed);
  PointMatrix pts(m_count, grid.rank());
  for (Eigen::Index m = 0; m < m_count; ++m) {
    if (grid.rank() == 1) {
      pts(m, 0) = rng.uniform(-r, r);
    } else {
      const double rho = r * std::sqrt(rng.uniform());
      const double theta = rng.uniform(-kPi, kPi);
      pts(m, 0) = rho * std::cos(theta);
      pts(m, 1) = rho * std::sin(theta);
    }
  }
  return SamplingPattern(std::move(pts));
}

}  // namespace offgrid
