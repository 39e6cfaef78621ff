#pragma once

#include "offgrid/frame.hpp"
#include "offgrid/linalg.hpp"
#include "offgrid/nuft.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace offgrid {

/// Plain value evaluation of the primitives the reconstructors are written
/// in. The differentiation tape (see tape.hpp) exposes the same interface
/// with handles in place of values.
class EagerBackend {
 public:
  using Vec = CVector;
  using Scalar = double;

  EagerBackend(const NuftOperator& op, const WaveletFrame* frame) : op_(&op), frame_(frame) {}

  Eigen::Index num_pixels() const { return op_->num_pixels(); }
  Eigen::Index num_coefficients() const { return frame().coefficient_count(); }

  Scalar constant(double v) const { return v; }
  Vec input(CVector v) const { return v; }
  Vec zeros(Eigen::Index n) const { return CVector::Zero(n); }

  Vec forward(const Vec& x) const { return op_->forward(x); }
  Vec adjoint(const Vec& y) const { return op_->adjoint(y); }
  Vec synthesize(const Vec& z) const { return frame().synthesize(z); }
  Vec analyze(const Vec& x) const { return frame().analyze(x); }

  Vec axpby(Scalar a, const Vec& x, Scalar b, const Vec& y) const { return kernels::axpby(a, x, b, y); }
  Vec scale(Scalar a, const Vec& x) const { return kernels::scale(a, x); }
  Vec soft_threshold(const Vec& u, Scalar t)
  {
    Vec z = kernels::soft_threshold(u, t);
    if (track_) {
      // FNV-1a over the active flags of every threshold application.
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        fingerprint_ = (fingerprint_ ^ static_cast<std::uint64_t>(std::abs(u[i]) > t)) * 1099511628211ULL;
      }
    }
    return z;
  }
  Scalar dot_re(const Vec& x, const Vec& y) const { return kernels::dot_re(x, y); }
  Vec project_out(const Vec& r, const std::vector<Vec>& basis, const std::vector<Vec>& images) const
  {
    return kernels::project_out(r, pointers(basis), pointers(images));
  }

  Scalar add(Scalar a, Scalar b) const { return a + b; }
  Scalar mul(Scalar a, Scalar b) const { return a * b; }
  Scalar div(Scalar a, Scalar b) const { return a / b; }
  Scalar neg(Scalar a) const { return -a; }
  Scalar sqrt(Scalar a) const { return std::sqrt(a); }

  /// Hash of which entries survived each soft-threshold so far. Two runs
  /// with equal fingerprints took the same branch everywhere.
  void track_active_sets() { track_ = true; }
  std::uint64_t active_set_fingerprint() const { return fingerprint_; }

  double value(Scalar s) const { return s; }
  const CVector& value(const Vec& v) const { return v; }

 private:
  static std::vector<const CVector*> pointers(const std::vector<Vec>& v)
  {
    std::vector<const CVector*> p;
    p.reserve(v.size());
    for (const auto& x : v) {
      p.push_back(&x);
    }
    return p;
  }

  const WaveletFrame& frame() const
  {
    if (frame_ == nullptr) {
      throw std::logic_error("EagerBackend: no wavelet frame configured");
    }
    return *frame_;
  }

  const NuftOperator* op_;
  const WaveletFrame* frame_;
  bool track_ = false;
  std::uint64_t fingerprint_ = 14695981039346656037ULL;
};

}  // namespace offgrid
