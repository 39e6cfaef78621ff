#pragma once

#include "offgrid/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace offgrid {

/// 1 inside the centered axis-aligned square of side round(f * dims[j]),
/// 0 outside. Along each axis the square covers positions
/// [-s/2, -s/2 + s - 1].
inline ComplexImage phantom_square(const ImageGrid& grid, double side_fraction = 0.5)
{
  if (!(side_fraction > 0.0 && side_fraction <= 1.0)) {
    throw std::invalid_argument("phantom_square: side_fraction must lie in (0, 1]");
  }
  std::array<int, 2> lo{}, hi{};
  for (int j = 0; j < grid.rank(); ++j) {
    const int side = static_cast<int>(std::lround(side_fraction * grid.extent(j)));
    lo[j] = -(side / 2);
    hi[j] = lo[j] + side - 1;
  }
  CVector data(grid.size());
  for (Eigen::Index n = 0; n < grid.size(); ++n) {
    const GridPosition p = grid_position(grid, n);
    bool inside = true;
    for (int j = 0; j < grid.rank(); ++j) {
      inside = inside && p[j] >= lo[j] && p[j] <= hi[j];
    }
    data[n] = inside ? 1.0 : 0.0;
  }
  return ComplexImage(grid, std::move(data));
}

struct Ellipse {
  double intensity;
  double semi_x;
  double semi_y;
  double center_x;
  double center_y;
  double angle_deg;
};

/// Ten-ellipse Shepp-Logan table with the high-contrast intensities of Toft,
/// on the square [-1, 1]^2.
inline constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

/// Shepp-Logan phantom rasterized at pixel centers, clipped to [0, 1].
/// Row 0 is the top of the image (y = +1); column 0 is x = -1.
inline ComplexImage phantom_shepp_logan(const ImageGrid& grid)
{
  if (grid.rank() != 2) {
    throw std::invalid_argument("phantom_shepp_logan: grid must be two-dimensional");
  }
  const int rows = grid.extent(0);
  const int cols = grid.extent(1);
  CVector data(grid.size());
  for (int a = 0; a < rows; ++a) {
    const double y = 1.0 - (2.0 * a + 1.0) / rows;
    for (int b = 0; b < cols; ++b) {
      const double x = (2.0 * b + 1.0) / cols - 1.0;
      double v = 0.0;
      for (const auto& e : kSheppLogan) {
        const double phi = e.angle_deg * kPi / 180.0;
        const double dx = x - e.center_x;
        const double dy = y - e.center_y;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double w = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.semi_x * e.semi_x) + (w * w) / (e.semi_y * e.semi_y) <= 1.0) {
          v += e.intensity;
        }
      }
      data[static_cast<Eigen::Index>(a) * cols + b] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ComplexImage(grid, std::move(data));
}

}  // namespace offgrid
