#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/signal.hpp"

namespace hjstab {

// Discrete L2 norm: sqrt(sum_t ||x_t||^2 * dt).
inline double l2_norm(const Signal& s) {
  s.validate();
  double acc = 0.0;
  for (double v : s.values) acc += v * v;
  return std::sqrt(acc * s.dt);
}

inline double l2_error_norm(const Signal& a, const Signal& b) {
  a.validate();
  b.validate();
  if (a.steps != b.steps || a.dim != b.dim) {
    throw std::invalid_argument("metrics: signal shape mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc * a.dt);
}

// RMSE = sqrt((1/N) sum_i ||y_i - yhat_i||^2_L2).
inline double rmse(const std::vector<Signal>& y, const std::vector<Signal>& yhat) {
  if (y.empty() || y.size() != yhat.size()) {
    throw std::invalid_argument("metrics: rmse needs matching non-empty batches");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double e = l2_error_norm(y[i], yhat[i]);
    acc += e * e;
  }
  return std::sqrt(acc / y.size());
}

struct GainIo {
  double value = 0.0;
  int used = 0;
  int excluded_zero_input = 0;
};

// GainIO = mean over sequences of ||y_i|| / ||u_i||; zero-norm inputs are
// excluded from the mean and counted.
inline GainIo gain_io(const std::vector<Signal>& u, const std::vector<Signal>& y) {
  if (u.empty() || u.size() != y.size()) {
    throw std::invalid_argument("metrics: gain_io needs matching non-empty batches");
  }
  GainIo out;
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double un = l2_norm(u[i]);
    if (un == 0.0) {
      ++out.excluded_zero_input;
      continue;
    }
    acc += l2_norm(y[i]) / un;
    ++out.used;
  }
  if (out.used > 0) out.value = acc / out.used;
  return out;
}

struct SequenceMetrics {
  int index = 0;
  double error_l2 = 0.0;
  double input_l2 = 0.0;
  double data_output_l2 = 0.0;
  double pred_output_l2 = 0.0;
};

struct BoundednessVerdict {
  double magnitude = 0.0;
  double max_abs_output = 0.0;
  bool bounded = true;
  int divergence_step = -1;
};

struct EvalReport {
  double rmse = 0.0;
  double gain_io_pred = 0.0;
  double gain_io_data = 0.0;
  double gain_io_error = 0.0;
  int gain_sequences_used = 0;
  int gain_sequences_excluded = 0;
  std::vector<SequenceMetrics> per_sequence;
  std::vector<BoundednessVerdict> verdicts;
};

inline EvalReport evaluate_predictions(const std::vector<Signal>& u, const std::vector<Signal>& y,
                                       const std::vector<Signal>& yhat) {
  EvalReport rep;
  rep.rmse = rmse(y, yhat);
  GainIo pred = gain_io(u, yhat);
  GainIo data = gain_io(u, y);
  rep.gain_io_pred = pred.value;
  rep.gain_io_data = data.value;
  rep.gain_io_error = std::abs(data.value - pred.value);
  rep.gain_sequences_used = pred.used;
  rep.gain_sequences_excluded = pred.excluded_zero_input;
  for (std::size_t i = 0; i < u.size(); ++i) {
    SequenceMetrics m;
    m.index = static_cast<int>(i);
    m.error_l2 = l2_error_norm(y[i], yhat[i]);
    m.input_l2 = l2_norm(u[i]);
    m.data_output_l2 = l2_norm(y[i]);
    m.pred_output_l2 = l2_norm(yhat[i]);
    rep.per_sequence.push_back(m);
  }
  return rep;
}

}  // namespace hjstab
