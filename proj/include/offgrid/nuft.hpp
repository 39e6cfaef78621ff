#pragma once

#include "offgrid/core.hpp"
#include "offgrid/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace offgrid {

/// Dense non-uniform Fourier transform
///
///   [A(xi) x]_m = sum_n x_n exp(-i <p_n, xi_m>)
///
/// evaluated exactly (no gridding). On a rank-2 grid the kernel factors as
/// exp(-i p0 xi0) * exp(-i p1 xi1); each factor is computed directly from its
/// own argument, and the sums are carried out as small dense matrix products
/// over fixed row blocks so the result does not depend on the thread count.
class NuftOperator {
 public:
  NuftOperator(SamplingPattern pattern, ImageGrid grid) : pattern_(std::move(pattern)), grid_(std::move(grid))
  {
    if (pattern_.rank() != grid_.rank()) {
      throw std::invalid_argument("NuftOperator: pattern and grid dimensions differ");
    }
    const Eigen::Index m_count = pattern_.size();
    const int rows = grid_.rows();
    const int cols = grid_.cols();
    const int col_axis = grid_.rank() - 1;

    row_coord_.resize(rows);
    col_coord_.resize(cols);
    for (int a = 0; a < rows; ++a) {
      row_coord_[a] = grid_.rank() == 2 ? a - rows / 2 : 0;
    }
    for (int b = 0; b < cols; ++b) {
      col_coord_[b] = b - cols / 2;
    }

    row_phase_.resize(m_count, rows);
    col_phase_.resize(m_count, cols);
    for (Eigen::Index m = 0; m < m_count; ++m) {
      const double xi_row = grid_.rank() == 2 ? pattern_(m, 0) : 0.0;
      const double xi_col = pattern_(m, col_axis);
      for (int a = 0; a < rows; ++a) {
        const double t = row_coord_[a] * xi_row;
        row_phase_(m, a) = Complex(std::cos(t), -std::sin(t));
      }
      for (int b = 0; b < cols; ++b) {
        const double t = col_coord_[b] * xi_col;
        col_phase_(m, b) = Complex(std::cos(t), -std::sin(t));
      }
    }
  }

  const SamplingPattern& pattern() const { return pattern_; }
  const ImageGrid& grid() const { return grid_; }
  Eigen::Index num_points() const { return pattern_.size(); }
  Eigen::Index num_pixels() const { return grid_.size(); }

  KSpaceVector forward(const ComplexImage& x) const
  {
    if (!(x.grid() == grid_)) {
      throw std::invalid_argument("nuft_forward: image grid does not match operator grid");
    }
    return KSpaceVector(forward(x.data()));
  }

  ComplexImage adjoint(const KSpaceVector& y) const { return ComplexImage(grid_, adjoint(y.data())); }

  /// y = A x on raw pixel data.
  CVector forward(const CVector& x) const
  {
    check_image(x, "nuft_forward");
    CVector y(num_points());
    const auto image_t = image_transposed(x);
    for_each_block(num_points(), kRowBlock, [&](std::ptrdiff_t m0, std::ptrdiff_t m1) {
      const Eigen::Index len = m1 - m0;
      const Eigen::MatrixXcd partial = col_phase_.middleRows(m0, len) * image_t;
      y.segment(m0, len) = row_phase_.middleRows(m0, len).cwiseProduct(partial).rowwise().sum();
    });
    return y;
  }

  /// x = A^H y on raw k-space data.
  CVector adjoint(const CVector& y) const
  {
    check_kspace(y, "nuft_adjoint");
    const int rows = grid_.rows();
    const int cols = grid_.cols();
    CVector x(num_pixels());
    if (grid_.rank() == 1) {
      for_each_block(cols, kColBlock, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
        x.segment(b0, b1 - b0).noalias() = col_phase_.middleCols(b0, b1 - b0).adjoint() * y;
      });
      return x;
    }
    const Eigen::MatrixXcd weighted = y.asDiagonal() * col_phase_.conjugate();
    for_each_block(rows, kAdjointRowBlock, [&](std::ptrdiff_t a0, std::ptrdiff_t a1) {
      const Eigen::MatrixXcd tile = row_phase_.middleCols(a0, a1 - a0).adjoint() * weighted;
      for (Eigen::Index a = a0; a < a1; ++a) {
        x.segment(a * cols, cols) = tile.row(a - a0).transpose();
      }
    });
    return x;
  }

  /// G[m][j] = d Re<cotangent, A(xi) x> / d xi_m^(j).
  PatternGradient vjp_pattern(const CVector& x, const CVector& cotangent) const
  {
    return forward_and_vjp(x, cotangent).second;
  }

  /// A x together with vjp_pattern(x, cotangent), sharing one pass.
  std::pair<CVector, PatternGradient> forward_and_vjp(const CVector& x, const CVector& cotangent) const
  {
    check_image(x, "nuft_vjp_pattern");
    check_kspace(cotangent, "nuft_vjp_pattern");
    const int rows = grid_.rows();
    const int cols = grid_.cols();
    const int rank = grid_.rank();

    // [X^T | (X o c_col)^T], W x 2H
    Eigen::MatrixXcd rhs(cols, 2 * rows);
    for (int a = 0; a < rows; ++a) {
      for (int b = 0; b < cols; ++b) {
        const Complex v = x[static_cast<Eigen::Index>(a) * cols + b];
        rhs(b, a) = v;
        rhs(b, rows + a) = col_coord_[b] * v;
      }
    }

    CVector y(num_points());
    PatternGradient grad(num_points(), rank);
    for_each_block(num_points(), kRowBlock, [&](std::ptrdiff_t m0, std::ptrdiff_t m1) {
      const Eigen::Index len = m1 - m0;
      const Eigen::MatrixXcd partial = col_phase_.middleRows(m0, len) * rhs;
      const auto phase = row_phase_.middleRows(m0, len);
      const Eigen::MatrixXcd plain = phase.cwiseProduct(partial.leftCols(rows));
      y.segment(m0, len) = plain.rowwise().sum();
      const CVector col_moment = phase.cwiseProduct(partial.rightCols(rows)).rowwise().sum();
      CVector row_moment;
      if (rank == 2) {
        row_moment = (plain * row_coord_.cast<Complex>().asDiagonal()).rowwise().sum();
      }
      for (Eigen::Index i = 0; i < len; ++i) {
        // Re(conj(c) * (-i) * moment) = Im(conj(c) * moment)
        const Complex c = std::conj(cotangent[m0 + i]);
        grad(m0 + i, rank - 1) = (c * col_moment[i]).imag();
        if (rank == 2) {
          grad(m0 + i, 0) = (c * row_moment[i]).imag();
        }
      }
    });
    return {std::move(y), std::move(grad)};
  }

 private:
  static constexpr std::ptrdiff_t kRowBlock = 128;
  static constexpr std::ptrdiff_t kAdjointRowBlock = 8;
  static constexpr std::ptrdiff_t kColBlock = 64;

  void check_image(const CVector& x, const char* who) const
  {
    if (x.size() != num_pixels()) {
      throw std::invalid_argument(std::string(who) + ": image length does not match operator grid");
    }
  }

  void check_kspace(const CVector& y, const char* who) const
  {
    if (y.size() != num_points()) {
      throw std::invalid_argument(std::string(who) + ": k-space length does not match pattern size");
    }
  }

  /// Row-major H x W pixels viewed as a W x H column-major matrix.
  Eigen::Map<const Eigen::MatrixXcd> image_transposed(const CVector& x) const
  {
    return {x.data(), grid_.cols(), grid_.rows()};
  }

  SamplingPattern pattern_;
  ImageGrid grid_;
  RVector row_coord_;
  RVector col_coord_;
  Eigen::MatrixXcd row_phase_;  // M x H, exp(-i p0 xi0); all ones for rank 1
  Eigen::MatrixXcd col_phase_;  // M x W, exp(-i p1 xi1)
};

inline KSpaceVector nuft_forward(const NuftOperator& op, const ComplexImage& x) { return op.forward(x); }

inline ComplexImage nuft_adjoint(const NuftOperator& op, const KSpaceVector& y) { return op.adjoint(y); }

inline PatternGradient nuft_vjp_pattern(const NuftOperator& op, const ComplexImage& x, const KSpaceVector& cotangent)
{
  if (!(x.grid() == op.grid())) {
    throw std::invalid_argument("nuft_vjp_pattern: image grid does not match operator grid");
  }
  return op.vjp_pattern(x.data(), cotangent.data());
}

}  // namespace offgrid
