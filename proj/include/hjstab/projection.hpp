#pragma once

// Closed-form differentiable projections of (f, G, h) onto the feasible set of
// the Hamilton-Jacobi inequality
//   gradV'f + (1/(2 gamma^2)) ||G' gradV||^2 + (1/2) ||h||^2 <= 0.
// Three variants: full triplet, drift only, and drift plus input matrix.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>

#include "hjstab/dynamics.hpp"
#include "hjstab/tensor.hpp"

namespace hjstab {

inline constexpr double kEpsNum = 1e-12;

enum class ProjectionMode { kNone, kF, kFG, kFGH };

inline const char* to_string(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::kNone: return "none";
    case ProjectionMode::kF: return "f";
    case ProjectionMode::kFG: return "fg";
    case ProjectionMode::kFGH: return "fgh";
  }
  return "?";
}

inline ProjectionMode projection_mode_from(const std::string& s) {
  if (s == "none") return ProjectionMode::kNone;
  if (s == "f") return ProjectionMode::kF;
  if (s == "fg") return ProjectionMode::kFG;
  if (s == "fgh") return ProjectionMode::kFGH;
  throw std::invalid_argument("projection: unknown mode '" + s + "'");
}

// Scalar pieces of the inequality at one state.
//   v_f  = gradV'f
//   v_g  = (1/(2 gamma^2)) ||G' gradV||^2
//   v_gh = v_g + (1/2)||h||^2
//   v_fh = v_f + (1/2)||h||^2
//   p_v  = gradV gradV' / ||gradV||^2
struct HjTerms {
  Var v_f, v_g, v_gh, v_fh, gradnorm2;
  Var p_v;
};

namespace detail {

inline void check_projection_args(const Var& gamma, double k) {
  if (!(gamma.scalar() > 0.0)) throw std::invalid_argument("projection: gamma must be positive");
  if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("projection: k must lie in [0, 1]");
}

inline Var half_sqnorm(Tape& t, const Var& v) { return scale_const(t, sqnorm(t, v), 0.5); }

// (1/(2 gamma^2)) ||G' gradV||^2 given gtv = G' gradV.
inline Var gain_term(Tape& t, const Var& gtv, const Var& gamma) {
  Var den = scale_const(t, mul(t, gamma, gamma), 2.0);
  return div(t, sqnorm(t, gtv), den);
}

}  // namespace detail

inline Var hj_function(Tape& t, const Var& f, const Var& G, const Var& h, const Var& grad_v,
                       const Var& gamma) {
  if (!(gamma.scalar() > 0.0)) throw std::invalid_argument("hj: gamma must be positive");
  Var v_f = dot(t, grad_v, f);
  Var gtv = tmatvec(t, G, grad_v);
  Var v_g = detail::gain_term(t, gtv, gamma);
  return add(t, add(t, v_f, v_g), detail::half_sqnorm(t, h));
}

inline HjTerms hj_terms(Tape& t, const Var& f, const Var& G, const Var& h, const Var& grad_v,
                        const Var& gamma) {
  HjTerms out;
  out.v_f = dot(t, grad_v, f);
  Var gtv = tmatvec(t, G, grad_v);
  out.v_g = detail::gain_term(t, gtv, gamma);
  Var hh = detail::half_sqnorm(t, h);
  out.v_gh = add(t, out.v_g, hh);
  out.v_fh = add(t, out.v_f, hh);
  out.gradnorm2 = sqnorm(t, grad_v);
  Var denom = clamp(t, out.gradnorm2, kEpsNum, std::numeric_limits<double>::infinity());
  out.p_v = scale(t, outer(t, grad_v, grad_v), div(t, t.constant_scalar(1.0), denom));
  return out;
}

struct ModifiedTriplet {
  Var f, G, h;
};

// Full projection: scales h by sqrt(s), shifts G along gradV, and subtracts the
// active part of the inequality from f. s = clamp(-v_f / v_gh, k^2, 1).
inline ModifiedTriplet project_fgh(Tape& t, const Var& f, const Var& G, const Var& h,
                                   const Var& grad_v, const Var& gamma, double k,
                                   bool stop_grad) {
  detail::check_projection_args(gamma, k);
  Var b2 = sqnorm(t, grad_v);
  if (b2.scalar() < kEpsNum) return {f, G, h};

  Var v_f = dot(t, grad_v, f);
  Var gtv = tmatvec(t, G, grad_v);
  Var v_gh = add(t, detail::gain_term(t, gtv, gamma), detail::half_sqnorm(t, h));

  Var sqrt_s;
  if (v_gh.scalar() < kEpsNum) {
    double s = v_f.scalar() <= 0.0 ? 1.0 : k * k;
    sqrt_s = t.constant_scalar(std::sqrt(s));
  } else {
    Var denom = clamp(t, v_gh, kEpsNum, std::numeric_limits<double>::infinity());
    Var ratio = div(t, scale_const(t, v_f, -1.0), denom);
    sqrt_s = sqrt(t, clamp(t, ratio, k * k, 1.0));
  }

  Var active = ramp(t, add(t, v_f, scale_const(t, v_gh, k * k)));
  Var f_corr = scale(t, grad_v, div(t, active, b2));
  Var g_coef = div(t, sub(t, t.constant_scalar(1.0), sqrt_s), b2);
  Var g_corr = scale(t, outer(t, grad_v, gtv), g_coef);
  if (stop_grad) {
    f_corr = stop_gradient(t, f_corr);
    g_corr = stop_gradient(t, g_corr);
  }
  return {sub(t, f, f_corr), sub(t, G, g_corr), scale(t, h, sqrt_s)};
}

// Drift-only projection: f_m = f - ramp(HJ(f, G, h)) gradV / ||gradV||^2.
inline ModifiedTriplet project_f(Tape& t, const Var& f, const Var& G, const Var& h,
                                 const Var& grad_v, const Var& gamma, bool stop_grad = false) {
  if (!(gamma.scalar() > 0.0)) throw std::invalid_argument("projection: gamma must be positive");
  Var b2 = sqnorm(t, grad_v);
  if (b2.scalar() < kEpsNum) return {f, G, h};
  Var hj = hj_function(t, f, G, h, grad_v, gamma);
  Var f_corr = scale(t, grad_v, div(t, ramp(t, hj), b2));
  if (stop_grad) f_corr = stop_gradient(t, f_corr);
  return {sub(t, f, f_corr), G, h};
}

// Drift and input-matrix projection: h is untouched, the gain term carries the
// clamp. s = clamp(-v_fh / v_g, k^2, 1).
inline ModifiedTriplet project_fg(Tape& t, const Var& f, const Var& G, const Var& h,
                                  const Var& grad_v, const Var& gamma, double k,
                                  bool stop_grad) {
  detail::check_projection_args(gamma, k);
  Var b2 = sqnorm(t, grad_v);
  if (b2.scalar() < kEpsNum) return {f, G, h};

  Var v_fh = add(t, dot(t, grad_v, f), detail::half_sqnorm(t, h));
  Var gtv = tmatvec(t, G, grad_v);
  Var v_g = detail::gain_term(t, gtv, gamma);

  Var sqrt_s;
  if (v_g.scalar() < kEpsNum) {
    double s = v_fh.scalar() <= 0.0 ? 1.0 : k * k;
    sqrt_s = t.constant_scalar(std::sqrt(s));
  } else {
    Var denom = clamp(t, v_g, kEpsNum, std::numeric_limits<double>::infinity());
    Var ratio = div(t, scale_const(t, v_fh, -1.0), denom);
    sqrt_s = sqrt(t, clamp(t, ratio, k * k, 1.0));
  }

  Var active = ramp(t, add(t, v_fh, scale_const(t, v_g, k * k)));
  Var f_corr = scale(t, grad_v, div(t, active, b2));
  Var g_coef = div(t, sub(t, t.constant_scalar(1.0), sqrt_s), b2);
  Var g_corr = scale(t, outer(t, grad_v, gtv), g_coef);
  if (stop_grad) {
    f_corr = stop_gradient(t, f_corr);
    g_corr = stop_gradient(t, g_corr);
  }
  return {sub(t, f, f_corr), sub(t, G, g_corr), h};
}

inline ModifiedTriplet project(Tape& t, ProjectionMode mode, const Var& f, const Var& G,
                               const Var& h, const Var& grad_v, const Var& gamma, double k,
                               bool stop_grad) {
  switch (mode) {
    case ProjectionMode::kNone: return {f, G, h};
    case ProjectionMode::kF: return project_f(t, f, G, h, grad_v, gamma, stop_grad);
    case ProjectionMode::kFG: return project_fg(t, f, G, h, grad_v, gamma, k, stop_grad);
    case ProjectionMode::kFGH: return project_fgh(t, f, G, h, grad_v, gamma, k, stop_grad);
  }
  throw std::invalid_argument("projection: unknown mode");
}

// (xdot, y) of the modified system at one point.
using VectorField = std::function<std::pair<Var, Var>(Tape&, const Var&, const Var&)>;

inline std::pair<Var, Var> modified_vector_field(Tape& t, const DynamicsVars& dv,
                                                 const LyapunovSpec& lyap, const Var& x,
                                                 const Var& u, ProjectionMode mode, double k,
                                                 bool stop_grad) {
  Var f = dv.f(t, x);
  Var G = dv.G(t, x);
  Var h = dv.h(t, x);
  if (mode != ProjectionMode::kNone) {
    Var grad_v = lyapunov_gradient(t, lyap, x);
    Var gamma = dv.gamma(t);
    ModifiedTriplet m = project(t, mode, f, G, h, grad_v, gamma, k, stop_grad);
    f = m.f;
    G = m.G;
    h = m.h;
  }
  return {add(t, f, matmul(t, G, u)), h};
}

inline VectorField make_modified_field(const DynamicsVars& dv, const LyapunovSpec& lyap,
                                       ProjectionMode mode, double k, bool stop_grad) {
  return [&dv, &lyap, mode, k, stop_grad](Tape& t, const Var& x, const Var& u) {
    return modified_vector_field(t, dv, lyap, x, u, mode, k, stop_grad);
  };
}

// Plain (tape-free) evaluation of the modified triplet at one state.
struct TripletValues {
  Tensor f, G, h;
  double hj_nominal = 0.0;
  double hj_modified = 0.0;
  double gradnorm2 = 0.0;
};

inline TripletValues eval_modified(const NominalDynamics& dyn, const LyapunovSpec& lyap,
                                   const Tensor& x, ProjectionMode mode, double k,
                                   bool stop_grad = false) {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, dyn);
  Var xv = t.constant(x);
  Var f = dv.f(t, xv);
  Var G = dv.G(t, xv);
  Var h = dv.h(t, xv);
  Var grad_v = lyapunov_gradient(t, lyap, xv);
  Var gamma = dv.gamma(t);
  TripletValues out;
  out.gradnorm2 = sqnorm(t, grad_v).scalar();
  out.hj_nominal = hj_function(t, f, G, h, grad_v, gamma).scalar();
  ModifiedTriplet m = project(t, mode, f, G, h, grad_v, gamma, k, stop_grad);
  out.hj_modified = hj_function(t, m.f, m.G, m.h, grad_v, gamma).scalar();
  out.f = m.f.tensor();
  out.G = m.G.tensor();
  out.h = m.h.tensor();
  return out;
}

}  // namespace hjstab
