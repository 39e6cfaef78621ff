#pragma once

#include "offgrid/grad.hpp"

#include <tbb/parallel_for.h>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

/// Outer problem: minimize F(xi) = E sum_k eta(R(xi, A(xi) x_k + b), x_k) over
/// unconstrained xi. With noise_sigma = 0 the expectation is exact; otherwise
/// it is replaced by an average over `noise_samples` fixed seeded draws, so F
/// stays a deterministic function of xi.
struct OptimProblem {
  std::vector<ComplexImage> training_images;
  ReconConfig recon;
  double noise_sigma = 0.0;
  int noise_samples = 1;
  std::uint64_t noise_seed = 0;

  void validate() const
  {
    if (training_images.empty()) {
      throw std::invalid_argument("OptimProblem: needs at least one training image");
    }
    for (const auto& img : training_images) {
      if (!(img.grid() == training_images.front().grid())) {
        throw std::invalid_argument("OptimProblem: training images must share one grid");
      }
    }
    if (!(noise_sigma >= 0.0) || noise_samples < 1) {
      throw std::invalid_argument("OptimProblem: invalid noise settings");
    }
    recon.validate();
  }
};

/// F(xi) and its gradient. Per-image terms are evaluated in parallel and
/// summed in index order.
inline LossAndGradient evaluate_F(const OptimProblem& problem, const SamplingPattern& pattern)
{
  problem.validate();
  const std::size_t k_count = problem.training_images.size();
  const bool noisy = problem.noise_sigma > 0.0;
  const std::size_t samples = noisy ? static_cast<std::size_t>(problem.noise_samples) : 1;

  // Noise draws depend only on (seed, sample, image), never on xi.
  std::vector<CVector> noise;
  if (noisy) {
    Rng rng(problem.noise_seed);
    for (std::size_t t = 0; t < samples * k_count; ++t) {
      noise.push_back(problem.noise_sigma * rng.complex_normal_vector(pattern.size()));
    }
  }

  std::vector<LossAndGradient> terms(samples * k_count);
  tbb::parallel_for(std::size_t{0}, terms.size(), [&](std::size_t t) {
    const auto& image = problem.training_images[t % k_count];
    terms[t] = loss_and_grad_single(pattern, image, problem.recon, noisy ? &noise[t] : nullptr);
  });

  LossAndGradient total{0.0, PatternGradient::Zero(pattern.size(), pattern.rank())};
  for (const auto& t : terms) {
    total.loss += t.loss;
    total.gradient += t.gradient;
  }
  if (noisy) {
    total.loss /= static_cast<double>(samples);
    total.gradient /= static_cast<double>(samples);
  }
  return total;
}

// ---------------------------------------------------------------------------
// L-BFGS
// ---------------------------------------------------------------------------

struct LbfgsConfig {
  int memory = 10;
  int max_iters = 300;
  double grad_tol = 1e-8;       // stop when ||grad||_inf <= grad_tol
  double armijo_c1 = 1e-4;
  double shrink = 0.5;
  int max_line_search_trials = 30;
  double initial_step = 1e-2;   // first step moves the steepest coordinate this far

  void validate() const
  {
    if (memory < 1 || max_iters < 0 || !(grad_tol > 0.0) || !(armijo_c1 > 0.0 && armijo_c1 < 1.0) ||
        !(shrink > 0.0 && shrink < 1.0) || max_line_search_trials < 1 || !(initial_step > 0.0)) {
      throw std::invalid_argument("LbfgsConfig: invalid settings");
    }
  }
};

/// One accepted iterate. Row 0 is the initial point (step 0, no trials).
struct IterationLog {
  int iter = 0;
  double loss = 0.0;
  double grad_inf_norm = 0.0;
  double step_size = 0.0;
  int ls_trials = 0;
};

struct LbfgsResult {
  SamplingPattern pattern;
  std::vector<IterationLog> history;
  bool line_search_failed = false;
  std::string stop_reason;
  int evaluations = 0;
};

inline std::string history_csv(const std::vector<IterationLog>& history)
{
  std::string out = "iter,loss,grad_inf_norm,step_size,ls_trials\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%d\n", h.iter, h.loss, h.grad_inf_norm, h.step_size,
                  h.ls_trials);
    out += buf;
  }
  return out;
}

/// Limited-memory BFGS with backtracking Armijo line search over the stacked
/// M * d pattern coordinates. `objective(pattern)` returns LossAndGradient.
///
/// Every accepted step strictly decreases the loss. If the line search runs
/// out of trials the best point so far is returned with
/// line_search_failed set.
template <class Objective>
  requires std::invocable<Objective&, const SamplingPattern&>
LbfgsResult minimize_lbfgs(Objective&& objective, const SamplingPattern& init, const LbfgsConfig& cfg)
{
  cfg.validate();
  const int d = init.rank();
  LbfgsResult result;

  RVector x = init.flat();
  LossAndGradient cur = objective(init);
  ++result.evaluations;
  if (!std::isfinite(cur.loss)) {
    throw std::runtime_error("minimize_lbfgs: objective is not finite at the initial point");
  }
  RVector g = Eigen::Map<const RVector>(cur.gradient.data(), cur.gradient.size());
  double f = cur.loss;
  result.history.push_back({0, f, g.lpNorm<Eigen::Infinity>(), 0.0, 0});

  std::deque<RVector> s_hist;
  std::deque<RVector> y_hist;
  std::deque<double> rho_hist;

  result.stop_reason = "max_iters";
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    const double g_inf = g.lpNorm<Eigen::Infinity>();
    if (g_inf <= cfg.grad_tol) {
      result.stop_reason = "grad_tol";
      break;
    }

    // Two-loop recursion.
    RVector dir;
    if (s_hist.empty()) {
      dir = -g * (cfg.initial_step / g_inf);
    } else {
      RVector q = g;
      std::vector<double> alpha(s_hist.size());
      for (std::size_t i = s_hist.size(); i-- > 0;) {
        alpha[i] = rho_hist[i] * s_hist[i].dot(q);
        q -= alpha[i] * y_hist[i];
      }
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
      for (std::size_t i = 0; i < s_hist.size(); ++i) {
        const double beta = rho_hist[i] * y_hist[i].dot(q);
        q += (alpha[i] - beta) * s_hist[i];
      }
      dir = -q;
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g * (cfg.initial_step / g_inf);
      slope = g.dot(dir);
    }

    double t = 1.0;
    bool accepted = false;
    int trials = 0;
    LossAndGradient next;
    RVector x_next;
    for (trials = 1; trials <= cfg.max_line_search_trials; ++trials) {
      x_next = x + t * dir;
      next = objective(SamplingPattern::from_flat(x_next, d));
      ++result.evaluations;
      if (std::isfinite(next.loss) && next.loss < f && next.loss <= f + cfg.armijo_c1 * t * slope) {
        accepted = true;
        break;
      }
      t *= cfg.shrink;
    }
    if (!accepted) {
      result.line_search_failed = true;
      result.stop_reason = "line_search_failed";
      break;
    }

    RVector g_next = Eigen::Map<const RVector>(next.gradient.data(), next.gradient.size());
    RVector s = x_next - x;
    RVector yv = g_next - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (static_cast<int>(s_hist.size()) == cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
    x = std::move(x_next);
    g = std::move(g_next);
    f = next.loss;
    result.history.push_back({iter, f, g.lpNorm<Eigen::Infinity>(), t, trials});
  }
  result.pattern = SamplingPattern::from_flat(x, d);
  return result;
}

inline LbfgsResult minimize_lbfgs(const OptimProblem& problem, const SamplingPattern& init, const LbfgsConfig& cfg)
{
  problem.validate();
  return minimize_lbfgs([&](const SamplingPattern& p) { return evaluate_F(problem, p); }, init, cfg);
}

}  // namespace offgrid
