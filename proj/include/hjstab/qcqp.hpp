#pragma once

// Particular QCQP family behind the projection theorems:
//   minimize   k_x x'Ax + k_y |y|
//   subject to y >= x'Ax - 2b'x + c
// with A positive definite. Closed form plus an independent numeric oracle.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hjstab {

enum class QcqpCase { kCNonPositive, kInteriorClamp, kUpperBranch };

inline const char* to_string(QcqpCase c) {
  switch (c) {
    case QcqpCase::kCNonPositive: return "c-nonpositive";
    case QcqpCase::kInteriorClamp: return "interior-clamp";
    case QcqpCase::kUpperBranch: return "upper-branch";
  }
  return "?";
}

struct QcqpInstance {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double c = 0.0;
  double k_x = 1.0;
  double k_y = 1.0;

  int dim() const { return static_cast<int>(A.rows()); }

  // Throws unless A is symmetric positive definite and the weights are positive.
  Eigen::LLT<Eigen::MatrixXd> validate() const {
    if (A.rows() != A.cols()) throw std::invalid_argument("qcqp: A must be square");
    if (b.size() != A.rows()) throw std::invalid_argument("qcqp: b dimension mismatch");
    if (!((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-10)) {
      throw std::invalid_argument("qcqp: A must be symmetric");
    }
    if (!(k_x > 0.0) || !(k_y > 0.0)) {
      throw std::invalid_argument("qcqp: weights k_x, k_y must be positive");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("qcqp: A must be positive definite");
    }
    return llt;
  }

  double objective(const Eigen::VectorXd& x, double y) const {
    return k_x * x.dot(A * x) + k_y * std::abs(y);
  }

  // y - (x'Ax - 2b'x + c); feasible when nonnegative.
  double constraint_residual(const Eigen::VectorXd& x, double y) const {
    return y - (x.dot(A * x) - 2.0 * b.dot(x) + c);
  }
};

struct QcqpSolution {
  Eigen::VectorXd x_star;
  double y_star = 0.0;
  QcqpCase active_case = QcqpCase::kCNonPositive;
};

inline QcqpSolution solve_closed_form(const QcqpInstance& inst) {
  Eigen::LLT<Eigen::MatrixXd> llt = inst.validate();
  QcqpSolution sol;
  if (inst.c <= 0.0) {
    sol.x_star = Eigen::VectorXd::Zero(inst.dim());
    sol.y_star = 0.0;
    sol.active_case = QcqpCase::kCNonPositive;
    return sol;
  }

  Eigen::VectorXd a_inv_b = llt.solve(inst.b);
  double bab = inst.b.dot(a_inv_b);
  if (bab <= 0.0) {
    // b = 0 (or numerically null): both terms are minimized coordinate-wise.
    sol.x_star = Eigen::VectorXd::Zero(inst.dim());
    sol.y_star = inst.c;
    sol.active_case = QcqpCase::kInteriorClamp;
    return sol;
  }

  double k_t = inst.k_x / (inst.k_x + inst.k_y);
  double c_t = inst.c / bab;
  double arg = 1.0 - c_t;
  double clamped = arg < k_t * k_t ? k_t * k_t : (arg > 1.0 ? 1.0 : arg);
  sol.x_star = (1.0 - std::sqrt(clamped)) * a_inv_b;
  double y_raw = inst.c - (1.0 - k_t * k_t) * bab;
  sol.y_star = y_raw > 0.0 ? y_raw : 0.0;
  sol.active_case =
      c_t > 1.0 - k_t * k_t ? QcqpCase::kInteriorClamp : QcqpCase::kUpperBranch;
  return sol;
}

struct OracleConfig {
  int grid_points = 21;
  int sweeps = 200;
  double tol = 1e-10;
};

namespace detail {

// Golden-section line search along one coordinate of a convex function.
template <typename F>
double golden_min(const F& f, double lo, double hi, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

// Orthonormal basis whose first column is parallel to v (identity when v ~ 0),
// via the Householder reflection exchanging v/|v| with the first axis.
inline Eigen::MatrixXd orthonormal_from(const Eigen::VectorXd& v) {
  int d = static_cast<int>(v.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, d);
  double n = v.norm();
  if (n < 1e-14) return q;
  Eigen::VectorXd u = v / n;
  u[0] += u[0] >= 0.0 ? 1.0 : -1.0;
  double un = u.squaredNorm();
  if (un < 1e-28) return q;
  q -= (2.0 / un) * (u * u.transpose());
  return q;
}

}  // namespace detail

// Independent ground truth for low dimensions: after the c <= 0 shortcut the
// problem reduces to minimizing k_x x'Ax + k_y ramp(x'Ax - 2b'x + c) over x,
// with y recovered as the ramped residual. Dense grid around the segment
// [0, A^-1 b] followed by coordinate descent on a Huber-smoothed ramp whose
// width is driven to zero, so the descent cannot stall on the constraint
// manifold where the minimizer sits in the tight cases.
inline QcqpSolution solve_numeric_oracle(const QcqpInstance& inst,
                                         const OracleConfig& cfg = {}) {
  Eigen::LLT<Eigen::MatrixXd> llt = inst.validate();
  int d = inst.dim();
  if (d > 3) throw std::invalid_argument("qcqp oracle: supports dimension <= 3 only");

  QcqpSolution sol;
  if (inst.c <= 0.0) {
    sol.x_star = Eigen::VectorXd::Zero(d);
    sol.y_star = 0.0;
    sol.active_case = QcqpCase::kCNonPositive;
    return sol;
  }

  auto reduced = [&](const Eigen::VectorXd& x, double mu) {
    double quad = x.dot(inst.A * x);
    double resid = quad - 2.0 * inst.b.dot(x) + inst.c;
    double hinge = 0.0;
    if (resid >= mu) {
      hinge = resid - 0.5 * mu;
    } else if (resid > 0.0) {
      hinge = 0.5 * resid * resid / mu;
    }
    return inst.k_x * quad + inst.k_y * hinge;
  };

  Eigen::VectorXd anchor = llt.solve(inst.b);
  Eigen::VectorXd lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    double span = std::abs(anchor[i]);
    double margin = 0.75 * span + 1.0;
    lo[i] = std::min(0.0, anchor[i]) - margin;
    hi[i] = std::max(0.0, anchor[i]) + margin;
  }

  Eigen::VectorXd best = Eigen::VectorXd::Zero(d);
  double best_val = reduced(best, 0.0);
  int total = 1;
  for (int i = 0; i < d; ++i) total *= cfg.grid_points;
  Eigen::VectorXd x(d);
  for (int flat = 0; flat < total; ++flat) {
    int rem = flat;
    for (int i = 0; i < d; ++i) {
      int g = rem % cfg.grid_points;
      rem /= cfg.grid_points;
      x[i] = lo[i] + (hi[i] - lo[i]) * g / (cfg.grid_points - 1);
    }
    double v = reduced(x, 0.0);
    if (v < best_val) {
      best_val = v;
      best = x;
    }
  }

  for (double mu = 1.0; mu > 1e-12; mu *= 0.1) {
    best_val = reduced(best, mu);
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
      double before = best_val;
      // Axis-aligned searches, then searches along the constraint normal at
      // the current point and its orthonormal completion; the latter slide
      // along the curved valley that the tight cases settle into.
      Eigen::MatrixXd frame = detail::orthonormal_from(2.0 * (inst.A * best - inst.b));
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < d; ++i) {
          Eigen::VectorXd dir = pass == 0 ? Eigen::VectorXd::Unit(d, i)
                                          : Eigen::VectorXd(frame.col(i));
          double radius = std::max(1.0, (hi - lo).maxCoeff());
          for (int shrink = 0; shrink < 4; ++shrink) {
            double step = detail::golden_min(
                [&](double v) { return reduced(best + v * dir, mu); }, -radius, radius,
                cfg.tol * radius);
            Eigen::VectorXd probe = best + step * dir;
            double v = reduced(probe, mu);
            if (v < best_val) {
              best_val = v;
              best = probe;
            }
            radius *= 0.1;
          }
        }
      }
      if (before - best_val < cfg.tol * (1.0 + std::abs(best_val))) break;
    }
  }

  sol.x_star = best;
  double resid = best.dot(inst.A * best) - 2.0 * inst.b.dot(best) + inst.c;
  sol.y_star = resid > 0.0 ? resid : 0.0;
  sol.active_case = sol.y_star > 0.0 ? QcqpCase::kInteriorClamp : QcqpCase::kUpperBranch;
  return sol;
}

}  // namespace hjstab
