#pragma once

#include "offgrid/eager.hpp"

#include <optional>
#include <stdexcept>

namespace offgrid {

/// Power iteration for ||B||^2 with B = A (image space) or B = A Psi
/// (coefficient space), written against the backend interface so it can be
/// recorded on a tape and differentiated.
///
/// Returns ||B v_k||^2 for the unit vector v_k = (B^H B)^k v_0 / ||.||. This
/// Rayleigh quotient is nondecreasing in k and never exceeds ||B||^2.
template <class B>
typename B::Scalar power_norm_sq(B& b, typename B::Vec v, int iters, bool through_frame)
{
  if (iters < 1) {
    throw std::invalid_argument("power iteration: iters must be >= 1");
  }
  auto apply = [&](const typename B::Vec& u) { return through_frame ? b.forward(b.synthesize(u)) : b.forward(u); };
  auto apply_adjoint = [&](const typename B::Vec& w) {
    return through_frame ? b.analyze(b.adjoint(w)) : b.adjoint(w);
  };
  const auto one = b.constant(1.0);

  v = b.scale(b.div(one, b.sqrt(b.dot_re(v, v))), v);
  for (int k = 0; k < iters; ++k) {
    auto w = apply_adjoint(apply(v));
    auto w_sq = b.dot_re(w, w);
    if (b.value(w_sq) == 0.0) {
      break;  // v lies in the null space; the estimate below is 0
    }
    v = b.scale(b.div(one, b.sqrt(w_sq)), w);
  }
  auto bv = apply(v);
  return b.dot_re(bv, bv);
}

/// Estimates ||A Psi||_2 (or ||A||_2 without a frame) from a seeded complex
/// Gaussian start vector.
inline double estimate_opnorm(const NuftOperator& op, const WaveletFrame* frame, int iters, std::uint64_t seed)
{
  if (frame != nullptr && !(frame->grid() == op.grid())) {
    throw std::invalid_argument("estimate_opnorm: frame grid does not match operator grid");
  }
  EagerBackend b(op, frame);
  Rng rng(seed);
  const Eigen::Index n = frame != nullptr ? frame->coefficient_count() : op.num_pixels();
  return std::sqrt(power_norm_sq(b, rng.complex_normal_vector(n), iters, frame != nullptr));
}

}  // namespace offgrid
