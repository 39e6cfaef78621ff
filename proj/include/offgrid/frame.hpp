#pragma once

#include "offgrid/core.hpp"

#include <stdexcept>

namespace offgrid {

/// Undecimated Haar frame with periodic boundaries.
///
/// Each level splits the current approximation with the filters
/// h = (1, 1)/2 and g = (1, -1)/2 dilated by 2^(level-1), separably along
/// every axis. Since |H|^2 + |G|^2 = 1 the analysis operator is an isometry,
/// so with synthesis defined as its adjoint, synthesize(analyze(x)) = x.
///
/// Coefficient layout: for each level the detail bands (rank 2: LH, HL, HH;
/// rank 1: D), each N long, followed by the final approximation band.
class WaveletFrame {
 public:
  WaveletFrame(ImageGrid grid, int levels) : grid_(std::move(grid)), levels_(levels)
  {
    if (levels_ < 1) {
      throw std::invalid_argument("WaveletFrame: levels must be >= 1");
    }
  }

  const ImageGrid& grid() const { return grid_; }
  int levels() const { return levels_; }
  int subbands() const { return grid_.rank() == 2 ? 3 * levels_ + 1 : levels_ + 1; }
  Eigen::Index num_pixels() const { return grid_.size(); }
  Eigen::Index coefficient_count() const { return grid_.size() * subbands(); }

  /// Psi^H x
  CVector analyze(const CVector& x) const
  {
    if (x.size() != num_pixels()) {
      throw std::invalid_argument("analyze: image length does not match frame grid");
    }
    const Eigen::Index n = num_pixels();
    CVector z(coefficient_count());
    CVector approx = x;
    Eigen::Index offset = 0;
    for (int level = 1; level <= levels_; ++level) {
      if (grid_.rank() == 1) {
        CVector lo, hi;
        split(approx, 0, level, lo, hi);
        z.segment(offset, n) = hi;
        offset += n;
        approx = std::move(lo);
      } else {
        CVector lo_c, hi_c, ll, lh, hl, hh;
        split(approx, 1, level, lo_c, hi_c);
        split(lo_c, 0, level, ll, lh);
        split(hi_c, 0, level, hl, hh);
        z.segment(offset, n) = lh;
        z.segment(offset + n, n) = hl;
        z.segment(offset + 2 * n, n) = hh;
        offset += 3 * n;
        approx = std::move(ll);
      }
    }
    z.segment(offset, n) = approx;
    return z;
  }

  /// Psi z
  CVector synthesize(const CVector& z) const
  {
    if (z.size() != coefficient_count()) {
      throw std::invalid_argument("synthesize: coefficient length does not match frame");
    }
    const Eigen::Index n = num_pixels();
    Eigen::Index offset = coefficient_count() - n;
    CVector approx = z.segment(offset, n);
    for (int level = levels_; level >= 1; --level) {
      if (grid_.rank() == 1) {
        offset -= n;
        approx = merge(approx, z.segment(offset, n), 0, level);
      } else {
        offset -= 3 * n;
        const CVector lo_c = merge(approx, z.segment(offset, n), 0, level);
        const CVector hi_c = merge(z.segment(offset + n, n), z.segment(offset + 2 * n, n), 0, level);
        approx = merge(lo_c, hi_c, 1, level);
      }
    }
    return approx;
  }

 private:
  /// Periodic shift 2^(level-1) along `axis`, reduced modulo the extent.
  Eigen::Index shift(int axis, int level) const
  {
    const Eigen::Index extent = grid_.extent(axis);
    Eigen::Index s = 1;
    for (int k = 1; k < level; ++k) {
      s = (2 * s) % extent;
    }
    return s % extent;
  }

  /// Strides for walking `axis` of the row-major buffer.
  void axis_layout(int axis, Eigen::Index& extent, Eigen::Index& stride, Eigen::Index& lines) const
  {
    extent = grid_.extent(axis);
    stride = (grid_.rank() == 2 && axis == 0) ? grid_.extent(1) : 1;
    lines = num_pixels() / extent;
  }

  /// Index of the first element of line `l` along `axis`.
  Eigen::Index line_start(int axis, Eigen::Index l) const
  {
    if (grid_.rank() == 2 && axis == 0) {
      return l;  // column l
    }
    return l * grid_.cols();  // row l (or the single line for rank 1)
  }

  void split(const CVector& x, int axis, int level, CVector& lo, CVector& hi) const
  {
    Eigen::Index extent, stride, lines;
    axis_layout(axis, extent, stride, lines);
    const Eigen::Index s = shift(axis, level);
    lo.resize(x.size());
    hi.resize(x.size());
    for (Eigen::Index l = 0; l < lines; ++l) {
      const Eigen::Index base = line_start(axis, l);
      for (Eigen::Index i = 0; i < extent; ++i) {
        const Complex a = x[base + i * stride];
        const Complex b = x[base + ((i + s) % extent) * stride];
        lo[base + i * stride] = 0.5 * (a + b);
        hi[base + i * stride] = 0.5 * (a - b);
      }
    }
  }

  CVector merge(const CVector& lo, const CVector& hi, int axis, int level) const
  {
    Eigen::Index extent, stride, lines;
    axis_layout(axis, extent, stride, lines);
    const Eigen::Index s = shift(axis, level);
    CVector x(lo.size());
    for (Eigen::Index l = 0; l < lines; ++l) {
      const Eigen::Index base = line_start(axis, l);
      for (Eigen::Index i = 0; i < extent; ++i) {
        const Eigen::Index back = base + ((i - s + extent) % extent) * stride;
        const Eigen::Index here = base + i * stride;
        x[here] = 0.5 * ((lo[here] + lo[back]) + (hi[here] - hi[back]));
      }
    }
    return x;
  }

  ImageGrid grid_;
  int levels_;
};

/// Redundant coefficients z in C^P for a given frame.
class CoefficientVector {
 public:
  CoefficientVector(const WaveletFrame& frame, CVector data) : frame_(&frame), data_(std::move(data))
  {
    if (data_.size() != frame.coefficient_count()) {
      throw std::invalid_argument("CoefficientVector: length does not match frame");
    }
    if (!all_finite(data_)) {
      throw std::invalid_argument("CoefficientVector: non-finite coefficient");
    }
  }

  const WaveletFrame& frame() const { return *frame_; }
  const CVector& data() const { return data_; }
  Eigen::Index size() const { return data_.size(); }

 private:
  const WaveletFrame* frame_;
  CVector data_;
};

inline ComplexImage synthesize(const WaveletFrame& frame, const CoefficientVector& z)
{
  if (&z.frame() != &frame && !(z.frame().grid() == frame.grid() && z.frame().levels() == frame.levels())) {
    throw std::invalid_argument("synthesize: coefficients belong to a different frame");
  }
  return ComplexImage(frame.grid(), frame.synthesize(z.data()));
}

inline CoefficientVector analyze(const WaveletFrame& frame, const ComplexImage& x)
{
  if (!(x.grid() == frame.grid())) {
    throw std::invalid_argument("analyze: image grid does not match frame grid");
  }
  return CoefficientVector(frame, frame.analyze(x.data()));
}

}  // namespace offgrid
