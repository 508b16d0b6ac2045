#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/projection.hpp"
#include "hjstab/signal.hpp"
#include "hjstab/tensor.hpp"

namespace hjstab {

struct RolloutConfig {
  double dt = 0.1;
  int steps = 1;
  std::optional<double> clip_bound = 10.0;
  bool record_states = false;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("rollout: dt must be positive");
    if (steps < 1) throw std::invalid_argument("rollout: needs at least one step");
    if (clip_bound && !(*clip_bound > 0.0)) {
      throw std::invalid_argument("rollout: clip bound must be positive");
    }
  }
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(int step)
      : std::runtime_error("state diverged at step " + std::to_string(step)), step(step) {}
  int step;
};

struct Rollout {
  std::vector<Var> y;
  std::vector<Var> x;

  Signal outputs(double dt) const {
    Signal s = Signal::make(dt, static_cast<int>(y.size()), static_cast<int>(y[0].tensor().size()));
    for (std::size_t t = 0; t < y.size(); ++t) s.set_row(static_cast<int>(t), y[t].tensor());
    return s;
  }

  Signal states(double dt) const {
    if (x.empty()) throw std::logic_error("rollout: states were not recorded");
    Signal s = Signal::make(dt, static_cast<int>(x.size()), static_cast<int>(x[0].tensor().size()));
    for (std::size_t t = 0; t < x.size(); ++t) s.set_row(static_cast<int>(t), x[t].tensor());
    return s;
  }
};

// Explicit Euler unroll: y_t = h(x_t), x_{t+1} = x_t + dt*(f(x_t) + G(x_t)u_t),
// with each state coordinate clamped to [-clip_bound, clip_bound] after the
// update when clipping is enabled. Differentiable end to end on the tape.
inline Rollout euler_rollout(Tape& t, const Tensor& x0, const Signal& u, const VectorField& field,
                             const RolloutConfig& cfg) {
  cfg.validate();
  u.validate();
  if (u.steps < cfg.steps) throw std::invalid_argument("rollout: input shorter than rollout");
  Rollout out;
  out.y.reserve(cfg.steps);
  if (cfg.record_states) out.x.reserve(cfg.steps);
  Var x = t.constant(x0);
  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.record_states) out.x.push_back(x);
    Var u_t = t.constant(u.row(step));
    auto [xdot, y_t] = field(t, x, u_t);
    out.y.push_back(y_t);
    x = add(t, x, scale_const(t, xdot, cfg.dt));
    if (cfg.clip_bound) {
      x = clamp(t, x, -*cfg.clip_bound, *cfg.clip_bound);
    } else if (!x.tensor().all_finite()) {
      throw DivergenceError(step);
    }
  }
  return out;
}

struct StepProbeResult {
  double magnitude = 0.0;
  Signal output;
  double max_abs_output = 0.0;
  std::optional<int> divergence_step;
};

// Constant inputs at each magnitude, fine dt, clipping removed; divergence is
// an expected outcome and is recorded, not raised.
inline std::vector<StepProbeResult> step_response_probe(const VectorField& field,
                                                        const Tensor& x0, int input_dim,
                                                        const std::vector<double>& magnitudes,
                                                        double dt = 0.01, int steps = 10000) {
  std::vector<StepProbeResult> results;
  for (double mag : magnitudes) {
    Tape t;
    t.recording = false;
    t.check_finite = false;
    StepProbeResult r;
    r.magnitude = mag;
    Signal u = Signal::make(dt, steps, input_dim);
    for (int i = 0; i < steps; ++i) {
      for (int j = 0; j < input_dim; ++j) u.at(i, j) = mag;
    }
    std::vector<Tensor> ys;
    Var x = t.constant(x0);
    Var u_row = t.constant(u.row(0));
    for (int step = 0; step < steps; ++step) {
      auto [xdot, y] = field(t, x, u_row);
      if (!y.tensor().all_finite() || !xdot.tensor().all_finite()) {
        r.divergence_step = step;
        break;
      }
      ys.push_back(y.tensor());
      for (std::size_t j = 0; j < ys.back().size(); ++j) {
        r.max_abs_output = std::max(r.max_abs_output, std::abs(ys.back()[j]));
      }
      x = add(t, x, scale_const(t, xdot, dt));
      if (!x.tensor().all_finite()) {
        r.divergence_step = step;
        break;
      }
    }
    if (!ys.empty()) {
      r.output = Signal::make(dt, static_cast<int>(ys.size()), static_cast<int>(ys[0].size()));
      for (std::size_t i = 0; i < ys.size(); ++i) {
        r.output.set_row(static_cast<int>(i), ys[i]);
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace hjstab
