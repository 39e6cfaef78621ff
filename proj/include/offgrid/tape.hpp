#pragma once

#include "offgrid/frame.hpp"
#include "offgrid/linalg.hpp"
#include "offgrid/nuft.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace offgrid {

/// Reverse-mode record of one loss evaluation.
///
/// Exposes the same primitive interface as EagerBackend, but every call
/// appends a node (operation, inputs, value) and returns a handle. Values are
/// computed with the shared kernels at record time, so the recorded numbers
/// are bitwise equal to an eager run. backward() sweeps the nodes in reverse
/// and returns d(output)/d(xi) for the operator's sampling pattern.
///
/// Complex cotangents follow the real-view convention: for a real output L
/// and a complex vector v, vbar = dL/dRe(v) + i dL/dIm(v), so that
/// dL = Re <vbar, dv>.
class Tape {
 public:
  struct Vec {
    int id = -1;
  };
  struct Scalar {
    int id = -1;
  };

  Tape(const NuftOperator& op, const WaveletFrame* frame) : op_(&op), frame_(frame) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Eigen::Index num_pixels() const { return op_->num_pixels(); }
  Eigen::Index num_coefficients() const { return frame().coefficient_count(); }
  std::size_t size() const { return nodes_.size(); }

  // -- recording ----------------------------------------------------------

  Scalar constant(double v) { return push_scalar(Op::constant, {}, v); }
  Vec input(CVector v) { return push_vec(Op::constant, {}, std::move(v)); }
  Vec zeros(Eigen::Index n) { return input(CVector::Zero(n)); }

  Vec forward(Vec x) { return push_vec(Op::forward, {x.id}, op_->forward(vec(x.id))); }
  Vec adjoint(Vec y) { return push_vec(Op::adjoint, {y.id}, op_->adjoint(vec(y.id))); }
  Vec synthesize(Vec z) { return push_vec(Op::synthesize, {z.id}, frame().synthesize(vec(z.id))); }
  Vec analyze(Vec x) { return push_vec(Op::analyze, {x.id}, frame().analyze(vec(x.id))); }

  Vec axpby(Scalar a, Vec x, Scalar b, Vec y)
  {
    return push_vec(Op::axpby, {a.id, x.id, b.id, y.id},
                    kernels::axpby(scal(a.id), vec(x.id), scal(b.id), vec(y.id)));
  }
  Vec scale(Scalar a, Vec x) { return push_vec(Op::scale, {a.id, x.id}, kernels::scale(scal(a.id), vec(x.id))); }
  Vec soft_threshold(Vec u, Scalar t)
  {
    return push_vec(Op::soft_threshold, {u.id, t.id}, kernels::soft_threshold(vec(u.id), scal(t.id)));
  }
  Scalar dot_re(Vec x, Vec y) { return push_scalar(Op::dot_re, {x.id, y.id}, kernels::dot_re(vec(x.id), vec(y.id))); }

  Vec project_out(Vec r, const std::vector<Vec>& basis, const std::vector<Vec>& images)
  {
    if (basis.size() != images.size()) {
      throw std::invalid_argument("project_out: basis and image counts differ");
    }
    std::vector<int> group;
    bool act = nodes_.at(static_cast<std::size_t>(r.id)).active;
    for (const auto& list : {basis, images}) {
      for (Vec v : list) {
        pack({v.id});
        group.push_back(v.id);
        act = act || nodes_[static_cast<std::size_t>(v.id)].active;
      }
    }
    CVector value = kernels::project_out(vec(r.id), pointers(basis), pointers(images));
    groups_.push_back(std::move(group));
    nodes_.push_back(Node{Op::project_out, true, act, pack({r.id}), static_cast<int>(groups_.size() - 1)});
    values_.push_back(std::move(value));
    scalars_.push_back(0.0);
    return Vec{static_cast<int>(nodes_.size() - 1)};
  }

  Scalar add(Scalar a, Scalar b) { return push_scalar(Op::add, {a.id, b.id}, scal(a.id) + scal(b.id)); }
  Scalar mul(Scalar a, Scalar b) { return push_scalar(Op::mul, {a.id, b.id}, scal(a.id) * scal(b.id)); }
  Scalar div(Scalar a, Scalar b) { return push_scalar(Op::div, {a.id, b.id}, scal(a.id) / scal(b.id)); }
  Scalar neg(Scalar a) { return push_scalar(Op::neg, {a.id}, -scal(a.id)); }
  Scalar sqrt(Scalar a) { return push_scalar(Op::sqrt, {a.id}, std::sqrt(scal(a.id))); }

  double value(Scalar s) const { return scal(s.id); }
  const CVector& value(Vec v) const { return vec(v.id); }

  // -- inspection -----------------------------------------------------------

  struct NonFinite {
    std::size_t index;
    std::string op;
  };

  /// First recorded node whose value contains NaN or Inf.
  std::optional<NonFinite> first_non_finite() const
  {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const bool ok = nodes_[i].is_vec ? all_finite(values_[i]) : std::isfinite(scalars_[i]);
      if (!ok) {
        return NonFinite{i, op_name(nodes_[i].op)};
      }
    }
    return std::nullopt;
  }

  /// Re-evaluates every node from its recorded inputs and returns the value
  /// of `out`. Equal to value(out) bit for bit.
  double replay(Scalar out) const
  {
    std::vector<CVector> v(nodes_.size());
    std::vector<double> s(nodes_.size(), 0.0);
    for (std::size_t i = 0; i <= static_cast<std::size_t>(out.id); ++i) {
      const Node& n = nodes_[i];
      const auto& in = n.in;
      switch (n.op) {
        case Op::constant:
          if (n.is_vec) {
            v[i] = values_[i];
          } else {
            s[i] = scalars_[i];
          }
          break;
        case Op::forward: v[i] = op_->forward(v[in[0]]); break;
        case Op::adjoint: v[i] = op_->adjoint(v[in[0]]); break;
        case Op::synthesize: v[i] = frame().synthesize(v[in[0]]); break;
        case Op::analyze: v[i] = frame().analyze(v[in[0]]); break;
        case Op::axpby: v[i] = kernels::axpby(s[in[0]], v[in[1]], s[in[2]], v[in[3]]); break;
        case Op::scale: v[i] = kernels::scale(s[in[0]], v[in[1]]); break;
        case Op::soft_threshold: v[i] = kernels::soft_threshold(v[in[0]], s[in[1]]); break;
        case Op::dot_re: s[i] = kernels::dot_re(v[in[0]], v[in[1]]); break;
        case Op::project_out: {
          const auto& g = groups_[static_cast<std::size_t>(n.group)];
          const std::size_t half = g.size() / 2;
          std::vector<const CVector*> b, h;
          for (std::size_t j = 0; j < half; ++j) {
            b.push_back(&v[g[j]]);
            h.push_back(&v[g[half + j]]);
          }
          v[i] = kernels::project_out(v[in[0]], b, h);
          break;
        }
        case Op::add: s[i] = s[in[0]] + s[in[1]]; break;
        case Op::mul: s[i] = s[in[0]] * s[in[1]]; break;
        case Op::div: s[i] = s[in[0]] / s[in[1]]; break;
        case Op::neg: s[i] = -s[in[0]]; break;
        case Op::sqrt: s[i] = std::sqrt(s[in[0]]); break;
      }
    }
    return s[static_cast<std::size_t>(out.id)];
  }

  // -- reverse sweep --------------------------------------------------------

  /// d(out)/d(xi) through every recorded node.
  PatternGradient backward(Scalar out) const
  {
    const auto count = static_cast<std::size_t>(out.id) + 1;
    std::vector<CVector> vbar(count);
    std::vector<double> sbar(count, 0.0);
    std::vector<char> seeded(count, 0);
    PatternGradient grad = PatternGradient::Zero(op_->num_points(), op_->pattern().rank());

    auto active = [&](int id) { return nodes_[static_cast<std::size_t>(id)].active; };
    auto add_vec = [&](int id, CVector g) {
      if (seeded[id]) {
        vbar[id] += g;
      } else {
        vbar[id] = std::move(g);
        seeded[id] = 1;
      }
    };
    auto add_scal = [&](int id, double g) {
      if (!active(id)) {
        return;
      }
      sbar[id] += g;
      seeded[id] = 1;
    };

    sbar[out.id] = 1.0;
    seeded[out.id] = 1;
    for (std::size_t k = count; k-- > 0;) {
      if (!seeded[k]) {
        continue;
      }
      const Node& n = nodes_[k];
      const auto& in = n.in;
      switch (n.op) {
        case Op::constant: break;
        case Op::forward: {
          // o = A x: xbar += A^H obar, xi gets Re<obar, dA x>.
          if (active(in[0])) {
            add_vec(in[0], op_->adjoint(vbar[k]));
          }
          grad += op_->vjp_pattern(values_[in[0]], vbar[k]);
          break;
        }
        case Op::adjoint: {
          // o = A^H w: wbar += A obar, xi gets Re<w, dA obar>.
          auto [a_obar, g] = op_->forward_and_vjp(vbar[k], values_[in[0]]);
          if (active(in[0])) {
            add_vec(in[0], std::move(a_obar));
          }
          grad += g;
          break;
        }
        case Op::synthesize:
          if (active(in[0])) {
            add_vec(in[0], frame().analyze(vbar[k]));
          }
          break;
        case Op::analyze:
          if (active(in[0])) {
            add_vec(in[0], frame().synthesize(vbar[k]));
          }
          break;
        case Op::axpby: {
          const CVector& obar = vbar[k];
          if (active(in[1])) {
            add_vec(in[1], kernels::scale(scalars_[in[0]], obar));
          }
          if (active(in[3])) {
            add_vec(in[3], kernels::scale(scalars_[in[2]], obar));
          }
          if (active(in[0])) {
            add_scal(in[0], kernels::dot_re(values_[in[1]], obar));
          }
          if (active(in[2])) {
            add_scal(in[2], kernels::dot_re(values_[in[3]], obar));
          }
          break;
        }
        case Op::scale: {
          if (active(in[1])) {
            add_vec(in[1], kernels::scale(scalars_[in[0]], vbar[k]));
          }
          if (active(in[0])) {
            add_scal(in[0], kernels::dot_re(values_[in[1]], vbar[k]));
          }
          break;
        }
        case Op::soft_threshold: {
          const CVector& u = values_[in[0]];
          const CVector& obar = vbar[k];
          const double t = scalars_[in[1]];
          if (!active(in[0]) && !active(in[1])) {
            break;
          }
          CVector ubar = CVector::Zero(u.size());
          double tbar = 0.0;
          for (Eigen::Index p = 0; p < u.size(); ++p) {
            const double mag = std::abs(u[p]);
            if (mag <= t) {
              continue;  // shrunk to zero, including the kink itself
            }
            const Complex phase = u[p] / mag;
            const double radial = (std::conj(phase) * obar[p]).real();
            ubar[p] = obar[p] - (t / mag) * (obar[p] - phase * radial);
            tbar -= radial;
          }
          add_vec(in[0], std::move(ubar));
          add_scal(in[1], tbar);
          break;
        }
        case Op::dot_re:
          if (active(in[0])) {
            add_vec(in[0], kernels::scale(sbar[k], values_[in[1]]));
          }
          if (active(in[1])) {
            add_vec(in[1], kernels::scale(sbar[k], values_[in[0]]));
          }
          break;
        case Op::project_out: {
          // o = r - sum_j b_j c_j, c_j = <h_j, r> / d_j, d_j = Re<b_j, h_j>.
          const auto& g = groups_[static_cast<std::size_t>(n.group)];
          const std::size_t half = g.size() / 2;
          const CVector& obar = vbar[k];
          const CVector& r = values_[in[0]];
          CVector rbar = obar;
          for (std::size_t j = 0; j < half; ++j) {
            const CVector& b = values_[g[j]];
            const CVector& h = values_[g[half + j]];
            const double d = kernels::dot_re(b, h);
            if (!(d > 0.0)) {
              continue;
            }
            const Complex c = kernels::dot(h, r) / d;
            const Complex s_j = kernels::dot(obar, b);
            const double dbar = (s_j * c).real() / d;
            rbar -= (std::conj(s_j) / d) * h;
            if (active(g[j])) {
              add_vec(g[j], (dbar * h - std::conj(c) * obar).eval());
            }
            if (active(g[half + j])) {
              add_vec(g[half + j], (dbar * b - (s_j / d) * r).eval());
            }
          }
          if (active(in[0])) {
            add_vec(in[0], std::move(rbar));
          }
          break;
        }
        case Op::add:
          add_scal(in[0], sbar[k]);
          add_scal(in[1], sbar[k]);
          break;
        case Op::mul:
          add_scal(in[0], sbar[k] * scalars_[in[1]]);
          add_scal(in[1], sbar[k] * scalars_[in[0]]);
          break;
        case Op::div: {
          const double b = scalars_[in[1]];
          add_scal(in[0], sbar[k] / b);
          add_scal(in[1], -sbar[k] * scalars_[k] / b);
          break;
        }
        case Op::neg: add_scal(in[0], -sbar[k]); break;
        case Op::sqrt: add_scal(in[0], sbar[k] / (2.0 * scalars_[k])); break;
      }
      vbar[k] = CVector();  // no longer needed
    }
    return grad;
  }

 private:
  enum class Op : std::uint8_t {
    constant,
    forward,
    adjoint,
    synthesize,
    analyze,
    axpby,
    scale,
    soft_threshold,
    dot_re,
    project_out,
    add,
    mul,
    div,
    neg,
    sqrt
  };

  struct Node {
    Op op;
    bool is_vec;
    bool active;  // depends on the sampling pattern
    std::array<int, 4> in;
    int group = -1;  // extra inputs of project_out
  };

  static std::string op_name(Op op)
  {
    switch (op) {
      case Op::constant: return "constant";
      case Op::forward: return "nuft_forward";
      case Op::adjoint: return "nuft_adjoint";
      case Op::synthesize: return "synthesize";
      case Op::analyze: return "analyze";
      case Op::axpby: return "axpby";
      case Op::scale: return "scale";
      case Op::soft_threshold: return "soft_threshold";
      case Op::dot_re: return "dot_re";
      case Op::project_out: return "project_out";
      case Op::add: return "add";
      case Op::mul: return "mul";
      case Op::div: return "div";
      case Op::neg: return "neg";
      case Op::sqrt: return "sqrt";
    }
    return "unknown";
  }

  bool any_active(Op op, std::initializer_list<int> in) const
  {
    if (op == Op::forward || op == Op::adjoint) {
      return true;
    }
    for (int id : in) {
      if (nodes_[static_cast<std::size_t>(id)].active) {
        return true;
      }
    }
    return false;
  }

  std::array<int, 4> pack(std::initializer_list<int> in) const
  {
    std::array<int, 4> a{-1, -1, -1, -1};
    std::size_t i = 0;
    for (int id : in) {
      if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument("Tape: invalid handle");
      }
      a[i++] = id;
    }
    return a;
  }

  Vec push_vec(Op op, std::initializer_list<int> in, CVector value)
  {
    nodes_.push_back(Node{op, true, any_active(op, in), pack(in), -1});
    values_.push_back(std::move(value));
    scalars_.push_back(0.0);
    return Vec{static_cast<int>(nodes_.size() - 1)};
  }

  Scalar push_scalar(Op op, std::initializer_list<int> in, double value)
  {
    nodes_.push_back(Node{op, false, any_active(op, in), pack(in), -1});
    values_.emplace_back();
    scalars_.push_back(value);
    return Scalar{static_cast<int>(nodes_.size() - 1)};
  }

  std::vector<const CVector*> pointers(const std::vector<Vec>& list) const
  {
    std::vector<const CVector*> p;
    p.reserve(list.size());
    for (Vec v : list) {
      p.push_back(&vec(v.id));
    }
    return p;
  }

  const CVector& vec(int id) const { return values_.at(static_cast<std::size_t>(id)); }
  double scal(int id) const { return scalars_.at(static_cast<std::size_t>(id)); }

  const WaveletFrame& frame() const
  {
    if (frame_ == nullptr) {
      throw std::logic_error("Tape: no wavelet frame configured");
    }
    return *frame_;
  }

  const NuftOperator* op_;
  const WaveletFrame* frame_;
  std::vector<Node> nodes_;
  std::vector<CVector> values_;
  std::vector<double> scalars_;
  std::vector<std::vector<int>> groups_;
};

}  // namespace offgrid
