#pragma once

// Independent reference implementations used only by the tests. Nothing here
// shares code with the library's kernels.

#include "offgrid/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <vector>

namespace oracle {

using offgrid::Complex;
using offgrid::CVector;

/// Position of pixel n, recomputed from scratch (row-major, -dims/2 origin).
inline std::vector<int> position(const std::vector<int>& dims, long n)
{
  std::vector<int> p(dims.size());
  for (long j = static_cast<long>(dims.size()) - 1; j >= 0; --j) {
    p[j] = static_cast<int>(n % dims[j]) - dims[j] / 2;
    n /= dims[j];
  }
  return p;
}

/// Serial double loop: y_m = sum_n x_n exp(-i <p_n, xi_m>).
inline CVector naive_forward(const offgrid::PointMatrix& xi, const std::vector<int>& dims, const CVector& x)
{
  CVector y = CVector::Zero(xi.rows());
  for (long m = 0; m < xi.rows(); ++m) {
    Complex acc = 0.0;
    for (long n = 0; n < x.size(); ++n) {
      const auto p = position(dims, n);
      double phase = 0.0;
      for (std::size_t j = 0; j < dims.size(); ++j) {
        phase += p[j] * xi(m, static_cast<long>(j));
      }
      acc += x[n] * std::polar(1.0, -phase);
    }
    y[m] = acc;
  }
  return y;
}

inline CVector naive_adjoint(const offgrid::PointMatrix& xi, const std::vector<int>& dims, const CVector& y)
{
  long n_total = 1;
  for (int d : dims) {
    n_total *= d;
  }
  CVector x = CVector::Zero(n_total);
  for (long n = 0; n < n_total; ++n) {
    const auto p = position(dims, n);
    Complex acc = 0.0;
    for (long m = 0; m < xi.rows(); ++m) {
      double phase = 0.0;
      for (std::size_t j = 0; j < dims.size(); ++j) {
        phase += p[j] * xi(m, static_cast<long>(j));
      }
      acc += y[m] * std::polar(1.0, phase);
    }
    x[n] = acc;
  }
  return x;
}

inline Eigen::MatrixXcd dense_matrix(const offgrid::PointMatrix& xi, const std::vector<int>& dims)
{
  long n_total = 1;
  for (int d : dims) {
    n_total *= d;
  }
  Eigen::MatrixXcd a(xi.rows(), n_total);
  for (long n = 0; n < n_total; ++n) {
    CVector e = CVector::Zero(n_total);
    e[n] = 1.0;
    a.col(n) = naive_forward(xi, dims, e);
  }
  return a;
}

/// Textbook 2-D DFT with frequency indices k in {0..H-1} x {0..W-1} over
/// pixel indices (i0, i1) in {0..H-1} x {0..W-1}:
///   X[k0, k1] = sum x[i0, i1] exp(-2 pi i (k0 i0 / H + k1 i1 / W)).
inline CVector dft2(const CVector& x, int rows, int cols)
{
  CVector out(x.size());
  for (int k0 = 0; k0 < rows; ++k0) {
    for (int k1 = 0; k1 < cols; ++k1) {
      Complex acc = 0.0;
      for (int i0 = 0; i0 < rows; ++i0) {
        for (int i1 = 0; i1 < cols; ++i1) {
          const double phase = 2.0 * M_PI * (double(k0) * i0 / rows + double(k1) * i1 / cols);
          acc += x[i0 * cols + i1] * std::polar(1.0, -phase);
        }
      }
      out[k0 * cols + k1] = acc;
    }
  }
  return out;
}

inline double rel_err(const CVector& a, const CVector& b) { return (a - b).norm() / b.norm(); }

}  // namespace oracle
