#pragma once

// Vector kernels shared by every execution backend. The eager evaluator and
// the differentiation tape both call these, which is what makes their
// forward values bitwise identical.

#include "offgrid/core.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace offgrid::kernels {

inline CVector axpby(double a, const CVector& x, double b, const CVector& y)
{
  if (x.size() != y.size()) {
    throw std::invalid_argument("axpby: length mismatch");
  }
  return (a * x + b * y).eval();
}

inline CVector scale(double a, const CVector& x) { return (a * x).eval(); }

/// Re <x, y> = Re sum conj(x_i) y_i, summed in index order.
inline double dot_re(const CVector& x, const CVector& y)
{
  if (x.size() != y.size()) {
    throw std::invalid_argument("dot_re: length mismatch");
  }
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    s += x[i].real() * y[i].real() + x[i].imag() * y[i].imag();
  }
  return s;
}

/// <x, y> = sum conj(x_i) y_i, summed in index order.
inline Complex dot(const CVector& x, const CVector& y)
{
  if (x.size() != y.size()) {
    throw std::invalid_argument("dot: length mismatch");
  }
  Complex s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    s += std::conj(x[i]) * y[i];
  }
  return s;
}

/// r - sum_j b_j <h_j, r> / Re<b_j, h_j>, every coefficient taken from the
/// input r (one classical Gram-Schmidt pass in the inner product that h_j = H b_j
/// induces). Pairs with Re<b_j, h_j> <= 0 are skipped.
inline CVector project_out(const CVector& r, const std::vector<const CVector*>& basis,
                           const std::vector<const CVector*>& images)
{
  if (basis.size() != images.size()) {
    throw std::invalid_argument("project_out: basis and image counts differ");
  }
  CVector out = r;
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const double d = dot_re(*basis[j], *images[j]);
    if (!(d > 0.0)) {
      continue;
    }
    out -= (dot(*images[j], r) / d) * *basis[j];
  }
  return out;
}

inline double max_abs(const CVector& x)
{
  double m = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    m = std::max(m, std::abs(x[i]));
  }
  return m;
}

}  // namespace offgrid::kernels

namespace offgrid {

/// Proximal map of t * |z| on C: z * max(1 - t/|z|, 0), with 0 -> 0.
inline Complex soft_threshold(Complex z, double t)
{
  if (!(t >= 0.0)) {
    throw std::invalid_argument("soft_threshold: negative threshold");
  }
  const double mag = std::abs(z);
  if (mag <= t) {
    return {0.0, 0.0};
  }
  return z * (1.0 - t / mag);
}

namespace kernels {

inline CVector soft_threshold(const CVector& u, double t)
{
  if (!(t >= 0.0)) {
    throw std::invalid_argument("soft_threshold: negative threshold");
  }
  CVector z(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    z[i] = offgrid::soft_threshold(u[i], t);
  }
  return z;
}

}  // namespace kernels
}  // namespace offgrid
