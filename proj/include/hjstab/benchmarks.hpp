#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "hjstab/dataset.hpp"
#include "hjstab/signal.hpp"

namespace hjstab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Bistable benchmark: xdot = x(1 - x^2) + u, y = x, x0 = -1.

struct BistableGenConfig {
  int n_sequences = 1000;
  double horizon = 10.0;
  double dt = 0.1;
  double x0 = -1.0;
  double amp_lo = 0.5, amp_hi = 2.0;
  double width_lo = 0.5, width_hi = 3.0;
  std::uint64_t seed = 0;

  int steps() const {
    double raw = horizon / dt;
    int n = static_cast<int>(std::lround(raw));
    if (std::abs(raw - n) > 1e-9 || n < 1) {
      throw std::invalid_argument("bistable: horizon must be an integer number of steps");
    }
    return n;
  }
};

inline double bistable_field(double x, double u) { return x * (1.0 - x * x) + u; }

inline Signal bistable_pulse(const BistableGenConfig& cfg, std::mt19937_64& rng) {
  int steps = cfg.steps();
  Signal u = Signal::make(cfg.dt, steps, 1);
  u.labels = {"u0"};
  double sign = (rng() & 1) ? 1.0 : -1.0;
  double width = std::uniform_real_distribution<double>(cfg.width_lo, cfg.width_hi)(rng);
  double amp = std::uniform_real_distribution<double>(cfg.amp_lo, cfg.amp_hi)(rng);
  double onset = std::uniform_real_distribution<double>(0.0, cfg.horizon)(rng);
  for (int t = 0; t < steps; ++t) {
    double time = t * cfg.dt;
    if (time >= onset && time < onset + width) u.at(t, 0) = sign * amp;
  }
  return u;
}

inline Signal bistable_simulate(const Signal& u, double x0) {
  Signal y = Signal::make(u.dt, u.steps, 1);
  y.labels = {"y0"};
  double x = x0;
  for (int t = 0; t < u.steps; ++t) {
    y.at(t, 0) = x;
    x += u.dt * bistable_field(x, u.at(t, 0));
  }
  return y;
}

inline Dataset gen_bistable(const BistableGenConfig& cfg) {
  Dataset ds;
  ds.benchmark = "bistable";
  ds.seed = cfg.seed;
  ds.dt = cfg.dt;
  for (int i = 0; i < cfg.n_sequences; ++i) {
    std::mt19937_64 rng(splitmix64(cfg.seed + static_cast<std::uint64_t>(i)));
    Sequence s;
    s.u = bistable_pulse(cfg, rng);
    s.y = bistable_simulate(s.u, cfg.x0);
    s.x0 = Tensor::vector({cfg.x0});
    ds.sequences.push_back(std::move(s));
  }
  ds.split = make_splits(cfg.n_sequences);
  return ds;
}

// ---------------------------------------------------------------------------
// Glucose-insulin regulation with a transport delay tau on plasma glucose.

struct GlucoseParams {
  double k1 = 3.35e-2;
  double k2 = 5.22e-5;
  double k3 = 1.055;
  double k4 = 0.293;
  double g0 = 3.13;
  double tau = 6.0;

  void validate() const {
    for (double v : {k1, k2, k3, k4, g0, tau}) {
      if (!(v > 0.0)) throw std::invalid_argument("glucose: parameters must be positive");
    }
  }
};

struct GlucoseEquilibrium {
  double G = 0.0, I = 0.0, X = 0.0;
};

inline GlucoseEquilibrium glucose_equilibrium(const GlucoseParams& p) {
  p.validate();
  double a = p.k1 * p.k3;
  GlucoseEquilibrium eq;
  eq.G = (-a + std::sqrt(a * a + 4.0 * p.k2 * p.k3 * p.k4 * p.g0)) / (2.0 * p.k2 * p.k4);
  eq.I = p.k4 * eq.G / p.k3;
  eq.X = eq.G * p.tau;
  return eq;
}

struct GlucoseState {
  double G = 0.0, I = 0.0, X = 0.0;
  std::deque<double> history;  // G over the last tau, oldest first

  static GlucoseState at(double G, double I, double X, const GlucoseParams& p, double dt) {
    GlucoseState s;
    s.G = G;
    s.I = I;
    s.X = X;
    double raw = p.tau / dt;
    int len = static_cast<int>(std::lround(raw));
    if (std::abs(raw - len) > 1e-9 || len < 1) {
      throw std::invalid_argument("glucose: dt must divide tau");
    }
    s.history.assign(len, G);
    return s;
  }

  static GlucoseState at_equilibrium(const GlucoseParams& p, double dt) {
    GlucoseEquilibrium eq = glucose_equilibrium(p);
    return at(eq.G, eq.I, eq.X, p, dt);
  }
};

inline void glucose_derivatives(const GlucoseState& s, double u, const GlucoseParams& p,
                                double& dG, double& dI, double& dX) {
  double delayed = s.history.front();
  dG = -p.k1 * s.G - p.k2 * s.G * s.I + p.g0 + u;
  dI = -p.k3 * s.I + (p.k4 / p.tau) * s.X;
  dX = s.G - delayed;
}

inline void glucose_step(GlucoseState& s, double u, const GlucoseParams& p, double dt) {
  double dG, dI, dX;
  glucose_derivatives(s, u, p, dG, dI, dX);
  double prev_G = s.G;
  s.G += dt * dG;
  s.I += dt * dI;
  s.X += dt * dX;
  if (!std::isfinite(s.G) || !std::isfinite(s.I) || !std::isfinite(s.X)) {
    throw std::runtime_error("glucose: non-finite state");
  }
  s.history.pop_front();
  s.history.push_back(prev_G);
}

// Meal absorption pulses on a gamma-shaped kernel; each pulse integrates to
// its drawn mass, and the sum is divided by blood volume per body weight.
struct MealScheduleConfig {
  int meals_lo = 1, meals_hi = 3;
  double onset_lo = 50.0, onset_hi = 800.0;
  double mass_lo = 40.0, mass_hi = 120.0;
  double shape_lo = 15.0, shape_hi = 45.0;
  double blood_volume = 0.80;
};

inline Signal gen_meal_input(std::mt19937_64& rng, const MealScheduleConfig& cfg, double dt,
                             int steps) {
  Signal u = Signal::make(dt, steps, 1);
  u.labels = {"u0"};
  int meals = std::uniform_int_distribution<int>(cfg.meals_lo, cfg.meals_hi)(rng);
  for (int j = 0; j < meals; ++j) {
    double onset = std::uniform_real_distribution<double>(cfg.onset_lo, cfg.onset_hi)(rng);
    double mass = std::uniform_real_distribution<double>(cfg.mass_lo, cfg.mass_hi)(rng);
    double shape = std::uniform_real_distribution<double>(cfg.shape_lo, cfg.shape_hi)(rng);
    for (int t = 0; t < steps; ++t) {
      double rel = t * dt - onset;
      if (rel < 0.0) continue;
      u.at(t, 0) += mass / cfg.blood_volume * rel / (shape * shape) * std::exp(-rel / shape);
    }
  }
  return u;
}

struct GlucoseGenConfig {
  int n_sequences = 1000;
  int steps = 1000;
  double dt = 1.0;
  GlucoseParams params;
  MealScheduleConfig meals;
  std::uint64_t seed = 0;
};

// Simulates the physical system per sequence from equilibrium, then scales
// inputs so the training-split max magnitude is one and min-max normalizes
// outputs with statistics fitted on the training split only.
inline Dataset gen_glucose_dataset(const GlucoseGenConfig& cfg) {
  cfg.params.validate();
  Dataset ds;
  ds.benchmark = "glucose";
  ds.seed = cfg.seed;
  ds.dt = cfg.dt;
  GlucoseEquilibrium eq = glucose_equilibrium(cfg.params);
  for (int i = 0; i < cfg.n_sequences; ++i) {
    std::mt19937_64 rng(splitmix64(cfg.seed + static_cast<std::uint64_t>(i)));
    Sequence s;
    s.u = gen_meal_input(rng, cfg.meals, cfg.dt, cfg.steps);
    s.y = Signal::make(cfg.dt, cfg.steps, 2);
    s.y.labels = {"G", "I"};
    GlucoseState state = GlucoseState::at_equilibrium(cfg.params, cfg.dt);
    for (int t = 0; t < cfg.steps; ++t) {
      s.y.at(t, 0) = state.G;
      s.y.at(t, 1) = state.I;
      glucose_step(state, s.u.at(t, 0), cfg.params, cfg.dt);
    }
    s.x0 = Tensor::vector({eq.G, eq.I, eq.X});
    ds.sequences.push_back(std::move(s));
  }
  ds.split = make_splits(cfg.n_sequences);

  double u_max = 0.0;
  for (int i : ds.train_indices()) {
    for (double v : ds.sequences[i].u.values) u_max = std::max(u_max, std::abs(v));
  }
  if (u_max == 0.0) u_max = 1.0;
  ds.u_scale = u_max;
  ds.norm.active = true;
  ds.norm.y_min.assign(2, std::numeric_limits<double>::infinity());
  ds.norm.y_max.assign(2, -std::numeric_limits<double>::infinity());
  for (int i : ds.train_indices()) {
    const Signal& y = ds.sequences[i].y;
    for (int t = 0; t < y.steps; ++t) {
      for (int j = 0; j < 2; ++j) {
        ds.norm.y_min[j] = std::min(ds.norm.y_min[j], y.at(t, j));
        ds.norm.y_max[j] = std::max(ds.norm.y_max[j], y.at(t, j));
      }
    }
  }
  for (Sequence& s : ds.sequences) {
    for (double& v : s.u.values) v /= u_max;
    for (int t = 0; t < s.y.steps; ++t) {
      for (int j = 0; j < 2; ++j) {
        double span = ds.norm.y_max[j] - ds.norm.y_min[j];
        if (span <= 0.0) span = 1.0;
        s.y.at(t, j) = (s.y.at(t, j) - ds.norm.y_min[j]) / span;
      }
    }
  }
  return ds;
}

}  // namespace hjstab
