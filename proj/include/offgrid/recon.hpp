#pragma once

#include "offgrid/eager.hpp"
#include "offgrid/opnorm.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

enum class ReconKind { tikhonov, l1_wavelet };

inline std::string to_string(ReconKind k) { return k == ReconKind::tikhonov ? "tikhonov" : "l1"; }

/// Settings of a fixed-iteration reconstructor R(xi, y).
struct ReconConfig {
  ReconKind kind = ReconKind::tikhonov;
  double lambda = 0.0;
  int iters = 30;

  // l1_wavelet only
  std::optional<WaveletFrame> frame;
  double step_safety = 0.9;    // tau = step_safety / ||A Psi||^2
  int opnorm_iters = 30;       // power iterations for ||A Psi||
  std::uint64_t opnorm_seed = 0;
  bool accelerated = true;     // FISTA; false gives plain (monotone) ISTA

  static ReconConfig tikhonov(double lambda, int iters = 30)
  {
    ReconConfig c;
    c.kind = ReconKind::tikhonov;
    c.lambda = lambda;
    c.iters = iters;
    return c;
  }

  static ReconConfig l1(WaveletFrame frame, double lambda, int iters = 60)
  {
    ReconConfig c;
    c.kind = ReconKind::l1_wavelet;
    c.lambda = lambda;
    c.iters = iters;
    c.frame = std::move(frame);
    return c;
  }

  void validate() const
  {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("ReconConfig: lambda must be positive");
    }
    if (iters < 1) {
      throw std::invalid_argument("ReconConfig: iters must be >= 1");
    }
    if ((kind == ReconKind::l1_wavelet) != frame.has_value()) {
      throw std::invalid_argument("ReconConfig: a wavelet frame is required exactly for the l1 reconstructor");
    }
    if (kind == ReconKind::l1_wavelet) {
      if (!(step_safety > 0.0 && step_safety <= 1.0)) {
        throw std::invalid_argument("ReconConfig: step_safety must lie in (0, 1]");
      }
      if (opnorm_iters < 1) {
        throw std::invalid_argument("ReconConfig: opnorm_iters must be >= 1");
      }
    }
  }
};

/// Per-iteration record of a reconstruction, enough to replay it exactly.
struct ReconTrace {
  ReconKind kind = ReconKind::tikhonov;
  /// CG: x_k; FISTA: z_k (both after iteration k).
  std::vector<CVector> iterates;
  /// CG: ||r_k|| of the normal equations; FISTA: ||A Psi v_k - y||.
  std::vector<double> residual_norms;
  /// CG: alpha_k; FISTA: tau.
  std::vector<double> steps;
  /// CG: beta_k; FISTA: momentum weight beta_k.
  std::vector<double> momentum;
  /// CG breakdown steps that left the state unchanged.
  std::vector<bool> identity_step;
  double initial_residual_norm = 0.0;
  double step_size = 0.0;  // FISTA tau
  double threshold = 0.0;  // FISTA tau * lambda

  std::size_t size() const { return steps.size(); }
};

struct ReconResult {
  ComplexImage image;
  ReconTrace trace;
};

/// 1e-3 * N
inline double default_tikhonov_lambda(const ImageGrid& grid) { return 1e-3 * static_cast<double>(grid.size()); }

/// 1e-3 * ||Psi^H A^H y||_inf
inline double default_l1_lambda(const NuftOperator& op, const WaveletFrame& frame, const KSpaceVector& y)
{
  return 1e-3 * kernels::max_abs(frame.analyze(op.adjoint(y.data())));
}

/// FISTA momentum weights beta_k = (t_k - 1) / t_{k+1}; they depend only on k.
inline std::vector<double> fista_momentum(int iters)
{
  std::vector<double> beta(static_cast<std::size_t>(iters));
  double t = 1.0;
  for (auto& b : beta) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    b = (t - 1.0) / t_next;
    t = t_next;
  }
  return beta;
}

// ---------------------------------------------------------------------------
// Algorithms, generic over the execution backend.
// ---------------------------------------------------------------------------

/// T iterations of the conjugate residual method on
/// (A^H A + lambda I) x = A^H y from x_0 = 0. Each iterate minimizes the
/// residual norm over the Krylov space, so that norm never increases.
///
/// Every new residual is re-orthogonalized (two passes) against the earlier
/// ones in the H-inner product. In exact arithmetic this changes nothing;
/// without it, rounding gets amplified to ~1e-6 relative in x_T for
/// mid-range T, and the unrolled loss stops being smooth in xi.
///
/// If a step denominator is not positive or the residual is exactly zero,
/// the remaining iterations are identity steps.
template <class B>
typename B::Vec tikhonov_cg(B& b, const typename B::Vec& y, const ReconConfig& cfg, ReconTrace* trace)
{
  const auto one = b.constant(1.0);
  const auto lambda = b.constant(cfg.lambda);
  auto normal = [&](const typename B::Vec& v) { return b.axpby(one, b.adjoint(b.forward(v)), lambda, v); };

  auto rhs = b.adjoint(y);
  auto x = b.zeros(b.num_pixels());
  auto r = rhs;
  auto p = rhs;
  auto hr = normal(r);
  auto hp = hr;
  auto rhr = b.dot_re(r, hr);
  bool stalled = false;
  std::vector<typename B::Vec> basis{r};
  std::vector<typename B::Vec> images{hr};

  if (trace != nullptr) {
    *trace = ReconTrace{};
    trace->kind = ReconKind::tikhonov;
    trace->initial_residual_norm = std::sqrt(kernels::dot_re(b.value(r), b.value(r)));
  }
  for (int k = 0; k < cfg.iters; ++k) {
    double alpha_v = 0.0;
    double beta_v = 0.0;
    if (!stalled && !(b.value(rhr) > 0.0)) {
      stalled = true;
    }
    if (!stalled) {
      auto hp_sq = b.dot_re(hp, hp);
      if (!(b.value(hp_sq) > 0.0)) {
        stalled = true;
      } else {
        auto alpha = b.div(rhr, hp_sq);
        x = b.axpby(one, x, alpha, p);
        r = b.axpby(one, r, b.neg(alpha), hp);
        r = b.project_out(r, basis, images);
        r = b.project_out(r, basis, images);
        hr = normal(r);
        auto rhr_next = b.dot_re(r, hr);
        auto beta = b.div(rhr_next, rhr);
        p = b.axpby(one, r, beta, p);
        hp = b.axpby(one, hr, beta, hp);
        rhr = rhr_next;
        basis.push_back(r);
        images.push_back(hr);
        alpha_v = b.value(alpha);
        beta_v = b.value(beta);
      }
    }
    if (trace != nullptr) {
      trace->iterates.push_back(b.value(x));
      trace->residual_norms.push_back(std::sqrt(kernels::dot_re(b.value(r), b.value(r))));
      trace->steps.push_back(alpha_v);
      trace->momentum.push_back(beta_v);
      trace->identity_step.push_back(stalled);
    }
  }
  return x;
}

/// Returns (tau, tau * lambda) for the l1 reconstructor.
///
/// ||A Psi|| = ||A|| for a tight frame, so the power iteration runs in image
/// space.
template <class B>
std::pair<typename B::Scalar, typename B::Scalar> fista_step(B& b, const ReconConfig& cfg)
{
  Rng rng(cfg.opnorm_seed);
  auto start = b.input(rng.complex_normal_vector(b.num_pixels()));
  auto norm_sq = power_norm_sq(b, start, cfg.opnorm_iters, false);
  const double v = b.value(norm_sq);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::runtime_error("reconstruct_l1: nonpositive operator norm estimate");
  }
  auto tau = b.div(b.constant(cfg.step_safety), norm_sq);
  return {tau, b.mul(tau, b.constant(cfg.lambda))};
}

/// T iterations of FISTA (or ISTA) on 1/2 ||A Psi z - y||^2 + lambda ||z||_1
/// from z_0 = 0; returns Psi z_T.
template <class B>
typename B::Vec l1_fista(B& b, const typename B::Vec& y, const ReconConfig& cfg, ReconTrace* trace)
{
  const auto one = b.constant(1.0);
  const auto minus_one = b.constant(-1.0);
  auto [tau, threshold] = fista_step(b, cfg);
  const auto neg_tau = b.neg(tau);
  const std::vector<double> beta = fista_momentum(cfg.iters);

  auto z = b.zeros(b.num_coefficients());
  auto v = z;
  if (trace != nullptr) {
    *trace = ReconTrace{};
    trace->kind = ReconKind::l1_wavelet;
    trace->step_size = b.value(tau);
    trace->threshold = b.value(threshold);
  }
  for (int k = 0; k < cfg.iters; ++k) {
    auto residual = b.axpby(one, b.forward(b.synthesize(v)), minus_one, y);
    auto gradient = b.analyze(b.adjoint(residual));
    auto z_next = b.soft_threshold(b.axpby(one, v, neg_tau, gradient), threshold);
    const double bk = cfg.accelerated ? beta[static_cast<std::size_t>(k)] : 0.0;
    v = cfg.accelerated ? b.axpby(b.constant(1.0 + bk), z_next, b.constant(-bk), z) : z_next;
    z = z_next;
    if (trace != nullptr) {
      trace->iterates.push_back(b.value(z));
      trace->residual_norms.push_back(std::sqrt(kernels::dot_re(b.value(residual), b.value(residual))));
      trace->steps.push_back(b.value(tau));
      trace->momentum.push_back(bk);
      trace->identity_step.push_back(false);
    }
  }
  return b.synthesize(z);
}

template <class B>
typename B::Vec reconstruct_with(B& b, const typename B::Vec& y, const ReconConfig& cfg, ReconTrace* trace = nullptr)
{
  cfg.validate();
  return cfg.kind == ReconKind::tikhonov ? tikhonov_cg(b, y, cfg, trace) : l1_fista(b, y, cfg, trace);
}

// ---------------------------------------------------------------------------
// Value-level entry points
// ---------------------------------------------------------------------------

inline void check_recon_inputs(const NuftOperator& op, const KSpaceVector& y, const ReconConfig& cfg)
{
  cfg.validate();
  if (y.size() != op.num_points()) {
    throw std::invalid_argument("reconstruct: k-space length does not match pattern size");
  }
  if (cfg.frame && !(cfg.frame->grid() == op.grid())) {
    throw std::invalid_argument("reconstruct: frame grid does not match operator grid");
  }
}

inline ReconResult reconstruct_tikhonov(const NuftOperator& op, const KSpaceVector& y, const ReconConfig& cfg)
{
  if (cfg.kind != ReconKind::tikhonov) {
    throw std::invalid_argument("reconstruct_tikhonov: config is not a Tikhonov config");
  }
  check_recon_inputs(op, y, cfg);
  EagerBackend b(op, nullptr);
  ReconResult out;
  CVector x = tikhonov_cg(b, y.data(), cfg, &out.trace);
  out.image = ComplexImage(op.grid(), std::move(x));
  return out;
}

inline ReconResult reconstruct_l1(const NuftOperator& op, const KSpaceVector& y, const ReconConfig& cfg)
{
  if (cfg.kind != ReconKind::l1_wavelet) {
    throw std::invalid_argument("reconstruct_l1: config is not an l1-wavelet config");
  }
  check_recon_inputs(op, y, cfg);
  EagerBackend b(op, &*cfg.frame);
  ReconResult out;
  CVector x = l1_fista(b, y.data(), cfg, &out.trace);
  out.image = ComplexImage(op.grid(), std::move(x));
  return out;
}

inline ReconResult reconstruct(const NuftOperator& op, const KSpaceVector& y, const ReconConfig& cfg)
{
  return cfg.kind == ReconKind::tikhonov ? reconstruct_tikhonov(op, y, cfg) : reconstruct_l1(op, y, cfg);
}

/// Re-runs a reconstruction from the scalars stored in its trace instead of
/// recomputing them. The output is bitwise equal to the original run.
inline CVector replay(const NuftOperator& op, const KSpaceVector& y, const ReconConfig& cfg, const ReconTrace& trace)
{
  check_recon_inputs(op, y, cfg);
  if (trace.kind != cfg.kind || static_cast<int>(trace.size()) != cfg.iters) {
    throw std::invalid_argument("replay: trace does not match config");
  }
  if (cfg.kind == ReconKind::tikhonov) {
    auto normal = [&](const CVector& v) { return kernels::axpby(1.0, op.adjoint(op.forward(v)), cfg.lambda, v); };
    CVector x = CVector::Zero(op.num_pixels());
    CVector r = op.adjoint(y.data());
    CVector p = r;
    CVector hp = normal(r);
    std::vector<CVector> basis{r};
    std::vector<CVector> images{hp};
    EagerBackend eb(op, nullptr);
    for (std::size_t k = 0; k < trace.size(); ++k) {
      if (trace.identity_step[k]) {
        continue;
      }
      const double alpha = trace.steps[k];
      const double beta = trace.momentum[k];
      x = kernels::axpby(1.0, x, alpha, p);
      r = kernels::axpby(1.0, r, -alpha, hp);
      r = eb.project_out(r, basis, images);
      r = eb.project_out(r, basis, images);
      const CVector hr = normal(r);
      basis.push_back(r);
      images.push_back(hr);
      p = kernels::axpby(1.0, r, beta, p);
      hp = kernels::axpby(1.0, hr, beta, hp);
    }
    return x;
  }
  const WaveletFrame& frame = *cfg.frame;
  CVector z = CVector::Zero(frame.coefficient_count());
  CVector v = z;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const CVector residual = kernels::axpby(1.0, op.forward(frame.synthesize(v)), -1.0, y.data());
    const CVector gradient = frame.analyze(op.adjoint(residual));
    CVector z_next = kernels::soft_threshold(kernels::axpby(1.0, v, -trace.step_size, gradient), trace.threshold);
    const double bk = trace.momentum[k];
    v = cfg.accelerated ? kernels::axpby(1.0 + bk, z_next, -bk, z) : z_next;
    z = std::move(z_next);
  }
  return frame.synthesize(z);
}

/// Objective of the l1 problem, 1/2 ||A Psi z - y||^2 + lambda ||z||_1.
inline double l1_objective(const NuftOperator& op, const WaveletFrame& frame, const CVector& y, const CVector& z,
                           double lambda)
{
  const CVector r = op.forward(frame.synthesize(z)) - y;
  double l1 = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    l1 += std::abs(z[i]);
  }
  return 0.5 * kernels::dot_re(r, r) + lambda * l1;
}

}  // namespace offgrid
