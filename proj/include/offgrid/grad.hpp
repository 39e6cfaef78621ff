#pragma once

#include "offgrid/recon.hpp"
#include "offgrid/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace offgrid {

struct LossAndGradient {
  double loss = 0.0;
  PatternGradient gradient;
};

/// eta(xhat, x) = 1/2 ||xhat - x||^2 in backend arithmetic.
template <class B>
typename B::Scalar squared_error(B& b, const typename B::Vec& xhat, const typename B::Vec& x)
{
  auto diff = b.axpby(b.constant(1.0), xhat, b.constant(-1.0), x);
  return b.mul(b.constant(0.5), b.dot_re(diff, diff));
}

namespace detail {

inline const WaveletFrame* frame_of(const ReconConfig& cfg) { return cfg.frame ? &*cfg.frame : nullptr; }

inline void check_single(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg,
                         const CVector* noise)
{
  cfg.validate();
  if (pattern.rank() != image.grid().rank()) {
    throw std::invalid_argument("loss: pattern and image dimensions differ");
  }
  if (cfg.frame && !(cfg.frame->grid() == image.grid())) {
    throw std::invalid_argument("loss: frame grid does not match image grid");
  }
  if (noise != nullptr && noise->size() != pattern.size()) {
    throw std::invalid_argument("loss: noise length does not match pattern size");
  }
}

}  // namespace detail

namespace detail {

struct EagerLoss {
  double loss;
  std::uint64_t active_sets;
};

inline EagerLoss eager_loss(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg,
                            const CVector* noise)
{
  check_single(pattern, image, cfg, noise);
  const NuftOperator op(pattern, image.grid());
  EagerBackend b(op, frame_of(cfg));
  b.track_active_sets();
  CVector y = b.forward(image.data());
  if (noise != nullptr) {
    y = b.axpby(1.0, y, 1.0, *noise);
  }
  const CVector xhat = reconstruct_with(b, y, cfg);
  return {squared_error(b, xhat, image.data()), b.active_set_fingerprint()};
}

}  // namespace detail

/// 1/2 ||R(xi, A(xi) x + b) - x||^2, value only.
inline double loss_single(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg,
                          const CVector* noise = nullptr)
{
  return detail::eager_loss(pattern, image, cfg, noise).loss;
}

/// Loss and its exact gradient through the T-iteration unrolled
/// reconstructor (not through the limit minimizer).
inline LossAndGradient loss_and_grad_single(const SamplingPattern& pattern, const ComplexImage& image,
                                            const ReconConfig& cfg, const CVector* noise = nullptr)
{
  detail::check_single(pattern, image, cfg, noise);
  const NuftOperator op(pattern, image.grid());
  Tape tape(op, detail::frame_of(cfg));
  const auto truth = tape.input(image.data());
  auto y = tape.forward(truth);
  if (noise != nullptr) {
    y = tape.axpby(tape.constant(1.0), y, tape.constant(1.0), tape.input(*noise));
  }
  const auto xhat = reconstruct_with(tape, y, cfg);
  const auto loss = squared_error(tape, xhat, truth);
  if (!std::isfinite(tape.value(loss))) {
    const auto bad = tape.first_non_finite();
    throw std::runtime_error("loss_and_grad_single: non-finite loss; first non-finite value produced by " +
                             (bad ? bad->op + " (node " + std::to_string(bad->index) + ")" : std::string("?")));
  }
  return {tape.value(loss), tape.backward(loss)};
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

struct FdEntry {
  Eigen::Index point = 0;
  int axis = 0;
  double analytic = 0.0;
  double finite_difference = 0.0;
  double relative_error = 0.0;
  bool near_kink = false;  // a soft-threshold changed branch inside [xi - h, xi + h]
};

struct FdCheckReport {
  double loss = 0.0;
  /// ||fd - g|| / ||g|| over the kink-free entries (NaN when there are none).
  double relative_error = 0.0;
  /// Largest per-entry |fd - g| / max(|fd|, |g|, 1e-8 |L|) over the kink-free entries.
  double max_relative_error = 0.0;
  int kink_free = 0;
  int near_kink = 0;
  std::vector<FdEntry> entries;
};

namespace detail {

inline FdEntry fd_entry(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg, double h,
                        const LossAndGradient& lg, std::uint64_t base_sets, Eigen::Index m, int j)
{
  if (m < 0 || m >= pattern.size() || j < 0 || j >= pattern.rank()) {
    throw std::out_of_range("grad_fd_check: coordinate out of range");
  }
  PointMatrix plus = pattern.points();
  PointMatrix minus = pattern.points();
  plus(m, j) += h;
  minus(m, j) -= h;
  const auto up = eager_loss(SamplingPattern(plus), image, cfg, nullptr);
  const auto down = eager_loss(SamplingPattern(minus), image, cfg, nullptr);
  FdEntry e;
  e.point = m;
  e.axis = j;
  e.analytic = lg.gradient(m, j);
  e.finite_difference = (up.loss - down.loss) / (2.0 * h);
  e.near_kink = up.active_sets != base_sets || down.active_sets != base_sets;
  const double denom = std::max({std::abs(e.finite_difference), std::abs(e.analytic), 1e-8 * std::abs(lg.loss)});
  e.relative_error = denom > 0.0 ? std::abs(e.finite_difference - e.analytic) / denom : 0.0;
  return e;
}

inline void summarize(FdCheckReport& report)
{
  double diff = 0.0;
  double norm = 0.0;
  report.max_relative_error = 0.0;
  report.kink_free = 0;
  report.near_kink = 0;
  for (const auto& e : report.entries) {
    if (e.near_kink) {
      ++report.near_kink;
      continue;
    }
    ++report.kink_free;
    diff += (e.finite_difference - e.analytic) * (e.finite_difference - e.analytic);
    norm += e.analytic * e.analytic;
    report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
  }
  if (report.kink_free == 0) {
    report.relative_error = std::numeric_limits<double>::quiet_NaN();
    report.max_relative_error = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  report.relative_error = norm > 0.0 ? std::sqrt(diff / norm) : std::sqrt(diff);
}

}  // namespace detail

/// Compares the unrolled gradient with central differences
/// (L(xi + h e) - L(xi - h e)) / 2h on the given coordinates.
///
/// A coordinate whose stencil moves any soft-threshold entry across its
/// threshold is flagged near_kink and left out of the summary errors; the
/// loss is only piecewise smooth there.
inline FdCheckReport grad_fd_check(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg,
                                   double h, const std::vector<std::pair<Eigen::Index, int>>& coords)
{
  if (!(h > 0.0)) {
    throw std::invalid_argument("grad_fd_check: h must be positive");
  }
  const LossAndGradient lg = loss_and_grad_single(pattern, image, cfg);
  const auto base = detail::eager_loss(pattern, image, cfg, nullptr);
  FdCheckReport report;
  report.loss = lg.loss;
  for (const auto& [m, j] : coords) {
    report.entries.push_back(detail::fd_entry(pattern, image, cfg, h, lg, base.active_sets, m, j));
  }
  detail::summarize(report);
  return report;
}

/// Same check on distinct coordinates drawn with a seeded RNG, drawing until
/// `count` kink-free coordinates are found or every coordinate was tried.
inline FdCheckReport grad_fd_check(const SamplingPattern& pattern, const ComplexImage& image, const ReconConfig& cfg,
                                   double h, int count, std::uint64_t seed)
{
  if (!(h > 0.0)) {
    throw std::invalid_argument("grad_fd_check: h must be positive");
  }
  const auto total = static_cast<std::uint64_t>(pattern.size() * pattern.rank());
  if (count < 0 || static_cast<std::uint64_t>(count) > total) {
    throw std::invalid_argument("grad_fd_check: coordinate count out of range");
  }
  const LossAndGradient lg = loss_and_grad_single(pattern, image, cfg);
  const auto base = detail::eager_loss(pattern, image, cfg, nullptr);
  FdCheckReport report;
  report.loss = lg.loss;
  Rng rng(seed);
  std::set<std::uint64_t> picked;
  int clean = 0;
  while (clean < count && picked.size() < total) {
    const auto flat = rng.below(total);
    if (!picked.insert(flat).second) {
      continue;
    }
    const auto m = static_cast<Eigen::Index>(flat) / pattern.rank();
    const auto j = static_cast<int>(flat % pattern.rank());
    report.entries.push_back(detail::fd_entry(pattern, image, cfg, h, lg, base.active_sets, m, j));
    clean += report.entries.back().near_kink ? 0 : 1;
  }
  detail::summarize(report);
  return report;
}

// ---------------------------------------------------------------------------
// Implicit differentiation of the exact Tikhonov minimizer (test oracle)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr Eigen::Index kMaxDensePixels = 4096;

/// A(xi) as a dense M x N matrix, one exponential per entry.
inline Eigen::MatrixXcd dense_nuft_matrix(const SamplingPattern& pattern, const ImageGrid& grid)
{
  Eigen::MatrixXcd a(pattern.size(), grid.size());
  for (Eigen::Index n = 0; n < grid.size(); ++n) {
    const GridPosition p = grid_position(grid, n);
    for (Eigen::Index m = 0; m < pattern.size(); ++m) {
      double phase = 0.0;
      for (int j = 0; j < grid.rank(); ++j) {
        phase += p[j] * pattern(m, j);
      }
      a(m, n) = Complex(std::cos(phase), -std::sin(phase));
    }
  }
  return a;
}

/// d Re<c, A v> / d xi computed from the dense matrix.
inline PatternGradient dense_vjp(const Eigen::MatrixXcd& a, const ImageGrid& grid, const CVector& v, const CVector& c)
{
  PatternGradient g(a.rows(), grid.rank());
  for (int j = 0; j < grid.rank(); ++j) {
    CVector weighted(v.size());
    for (Eigen::Index n = 0; n < v.size(); ++n) {
      weighted[n] = static_cast<double>(grid_position(grid, n)[j]) * v[n];
    }
    const CVector moment = a * weighted;
    for (Eigen::Index m = 0; m < a.rows(); ++m) {
      g(m, j) = (std::conj(c[m]) * moment[m]).imag();
    }
  }
  return g;
}

struct ExactTikhonov {
  Eigen::MatrixXcd a;
  Eigen::LLT<Eigen::MatrixXcd> normal;
  CVector minimizer;
};

inline ExactTikhonov exact_tikhonov(const SamplingPattern& pattern, const ComplexImage& image, double lambda)
{
  if (image.size() > kMaxDensePixels) {
    throw std::invalid_argument("implicit Tikhonov oracle: instance too large (N > 4096)");
  }
  ExactTikhonov e;
  e.a = dense_nuft_matrix(pattern, image.grid());
  Eigen::MatrixXcd h = e.a.adjoint() * e.a;
  h.diagonal().array() += lambda;
  e.normal.compute(h);
  e.minimizer = e.normal.solve(e.a.adjoint() * (e.a * image.data()));
  return e;
}

}  // namespace detail

/// 1/2 ||x*(xi) - x||^2 for the exact minimizer x* of the Tikhonov problem.
inline double tikhonov_exact_loss(const SamplingPattern& pattern, const ComplexImage& image, double lambda)
{
  const auto e = detail::exact_tikhonov(pattern, image, lambda);
  const CVector diff = e.minimizer - image.data();
  return 0.5 * diff.squaredNorm();
}

/// Gradient of 1/2 ||x*(xi) - x||^2, where (A^H A + lambda I) x* = A^H A x,
/// by the implicit function theorem. With s = (A^H A + lambda I)^-1 (x* - x):
///   dL = Re<y - A x*, dA s> + Re<A s, dA (x - x*)>.
inline PatternGradient grad_tikhonov_implicit(const SamplingPattern& pattern, const ComplexImage& image,
                                              const ReconConfig& cfg)
{
  if (cfg.kind != ReconKind::tikhonov) {
    throw std::invalid_argument("grad_tikhonov_implicit: config is not a Tikhonov config");
  }
  cfg.validate();
  const auto e = detail::exact_tikhonov(pattern, image, cfg.lambda);
  const CVector& x = image.data();
  const CVector s = e.normal.solve(e.minimizer - x);
  const CVector y = e.a * x;
  const CVector data_residual = y - e.a * e.minimizer;
  return detail::dense_vjp(e.a, image.grid(), s, data_residual) +
         detail::dense_vjp(e.a, image.grid(), x - e.minimizer, e.a * s);
}

}  // namespace offgrid
