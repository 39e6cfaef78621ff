#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// M x d real array, one row per k-space point. Flat storage is m * d + j.
using PointMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gradient of a scalar with respect to every pattern coordinate.
using PatternGradient = PointMatrix;

/// Integer grid position, at most two entries.
using GridPosition = Eigen::Matrix<int, Eigen::Dynamic, 1, 0, 2, 1>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline bool all_finite(const CVector& v)
{
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// ImageGrid
// ---------------------------------------------------------------------------

/// Cartesian pixel grid of rank 1 or 2 with even side lengths.
///
/// Pixels are enumerated row-major: for rank 2 the pixel index is
/// n = i0 * dims[1] + i1 and its position is (i0 - dims[0]/2, i1 - dims[1]/2).
class ImageGrid {
 public:
  ImageGrid() = default;

  ImageGrid(std::initializer_list<int> dims) : ImageGrid(std::vector<int>(dims)) {}

  explicit ImageGrid(std::vector<int> dims) : dims_(std::move(dims))
  {
    if (dims_.empty() || dims_.size() > 2) {
      throw std::invalid_argument("ImageGrid: rank must be 1 or 2");
    }
    for (int n : dims_) {
      if (n <= 0 || n % 2 != 0) {
        throw std::invalid_argument("ImageGrid: side lengths must be positive and even");
      }
    }
  }

  int rank() const { return static_cast<int>(dims_.size()); }
  int extent(int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  const std::vector<int>& dims() const { return dims_; }

  /// Number of rows in the row-major layout (1 for rank-1 grids).
  int rows() const { return rank() == 2 ? dims_[0] : 1; }
  /// Number of columns, i.e. the extent of the fastest-varying axis.
  int cols() const { return dims_.back(); }

  Eigen::Index size() const
  {
    Eigen::Index n = 1;
    for (int d : dims_) {
      n *= d;
    }
    return n;
  }

  bool operator==(const ImageGrid&) const = default;

 private:
  std::vector<int> dims_;
};

/// Integer coordinates {-n/2, ..., n/2 - 1} along one axis.
inline std::vector<int> axis_coordinates(const ImageGrid& grid, int axis)
{
  const int n = grid.extent(axis);
  std::vector<int> c(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    c[static_cast<std::size_t>(k)] = k - n / 2;
  }
  return c;
}

inline GridPosition grid_position(const ImageGrid& grid, Eigen::Index n)
{
  if (n < 0 || n >= grid.size()) {
    throw std::out_of_range("grid_position: pixel index out of range");
  }
  GridPosition p(grid.rank());
  if (grid.rank() == 1) {
    p[0] = static_cast<int>(n) - grid.extent(0) / 2;
  } else {
    const auto cols = static_cast<Eigen::Index>(grid.extent(1));
    p[0] = static_cast<int>(n / cols) - grid.extent(0) / 2;
    p[1] = static_cast<int>(n % cols) - grid.extent(1) / 2;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

class ComplexImage {
 public:
  ComplexImage() = default;

  explicit ComplexImage(ImageGrid grid) : grid_(std::move(grid)), data_(CVector::Zero(grid_.size())) {}

  ComplexImage(ImageGrid grid, CVector data) : grid_(std::move(grid)), data_(std::move(data))
  {
    if (data_.size() != grid_.size()) {
      throw std::invalid_argument("ComplexImage: data length does not match grid");
    }
    if (!all_finite(data_)) {
      throw std::invalid_argument("ComplexImage: non-finite pixel value");
    }
  }

  const ImageGrid& grid() const { return grid_; }
  const CVector& data() const { return data_; }
  Eigen::Index size() const { return data_.size(); }
  Complex operator[](Eigen::Index n) const { return data_[n]; }

 private:
  ImageGrid grid_;
  CVector data_;
};

/// k-space measurements, index-aligned with the points of a SamplingPattern.
class KSpaceVector {
 public:
  KSpaceVector() = default;

  explicit KSpaceVector(CVector data) : data_(std::move(data))
  {
    if (!all_finite(data_)) {
      throw std::invalid_argument("KSpaceVector: non-finite sample");
    }
  }

  const CVector& data() const { return data_; }
  Eigen::Index size() const { return data_.size(); }
  Complex operator[](Eigen::Index m) const { return data_[m]; }

 private:
  CVector data_;
};

/// M off-grid k-space locations in radians per pixel.
///
/// Coordinates live in unconstrained R^d; use wrap_pattern() to get the
/// canonical representative in [-pi, pi)^d.
class SamplingPattern {
 public:
  SamplingPattern() = default;

  explicit SamplingPattern(PointMatrix points) : points_(std::move(points))
  {
    if (points_.rows() < 1) {
      throw std::invalid_argument("SamplingPattern: needs at least one point");
    }
    if (points_.cols() < 1 || points_.cols() > 2) {
      throw std::invalid_argument("SamplingPattern: dimension must be 1 or 2");
    }
    if (!points_.allFinite()) {
      throw std::invalid_argument("SamplingPattern: non-finite coordinate");
    }
  }

  /// Builds a pattern from stacked coordinates (m * d + j layout).
  static SamplingPattern from_flat(const RVector& flat, int d)
  {
    if (d < 1 || flat.size() % d != 0) {
      throw std::invalid_argument("SamplingPattern: flat length not a multiple of d");
    }
    PointMatrix pts(flat.size() / d, d);
    Eigen::Map<RVector>(pts.data(), pts.size()) = flat;
    return SamplingPattern(std::move(pts));
  }

  Eigen::Index size() const { return points_.rows(); }
  int rank() const { return static_cast<int>(points_.cols()); }
  const PointMatrix& points() const { return points_; }
  double operator()(Eigen::Index m, int j) const { return points_(m, j); }

  RVector flat() const { return Eigen::Map<const RVector>(points_.data(), points_.size()); }

 private:
  PointMatrix points_;
};

/// Wraps a single coordinate into [-pi, pi).
inline double wrap_angle(double c)
{
  if (!std::isfinite(c)) {
    throw std::invalid_argument("wrap_pattern: non-finite coordinate");
  }
  double w = c - kTwoPi * std::floor((c + kPi) / kTwoPi);
  if (w >= kPi) {
    w -= kTwoPi;
  }
  if (w < -kPi) {
    w += kTwoPi;
  }
  return w;
}

inline SamplingPattern wrap_pattern(const SamplingPattern& pattern)
{
  PointMatrix pts = pattern.points();
  for (Eigen::Index i = 0; i < pts.size(); ++i) {
    pts.data()[i] = wrap_angle(pts.data()[i]);
  }
  return SamplingPattern(std::move(pts));
}

// ---------------------------------------------------------------------------
// Seeded RNG
// ---------------------------------------------------------------------------

/// Deterministic random source. The engine is mt19937_64 (fully specified by
/// the standard); the conversions below are spelled out so that draws do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Index uniform on {0, ..., n - 1}.
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

  /// Standard normal via Box-Muller; both variates of a pair are used.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 == 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

  /// Circular complex normal with E|z|^2 = 1.
  Complex complex_normal()
  {
    const double re = normal();
    const double im = normal();
    return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
  }

  CVector complex_normal_vector(Eigen::Index n)
  {
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      v[i] = complex_normal();
    }
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace offgrid
