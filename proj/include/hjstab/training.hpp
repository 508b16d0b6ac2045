#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/csv.hpp"
#include "hjstab/dataset.hpp"
#include "hjstab/dynamics.hpp"
#include "hjstab/metrics.hpp"
#include "hjstab/projection.hpp"
#include "hjstab/simulation.hpp"

namespace hjstab {

// ---------------------------------------------------------------------------
// Optimizers.

enum class OptimizerKind { kSgd, kAdam, kAdamW, kRmsProp };

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdamW: return "adamw";
    case OptimizerKind::kRmsProp: return "rmsprop";
  }
  return "?";
}

inline OptimizerKind optimizer_kind_from(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "rmsprop") return OptimizerKind::kRmsProp;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kRmsProp;
  double rate = 1e-3;
  double weight_decay = 0.0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kRmsPropAlpha = 0.99;
inline constexpr double kRmsPropEps = 1e-8;

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<std::shared_ptr<Tensor>> params)
      : cfg_(cfg), params_(std::move(params)) {
    if (!(cfg_.rate > 0.0)) throw std::invalid_argument("optimizer: rate must be positive");
    if (cfg_.weight_decay < 0.0) throw std::invalid_argument("optimizer: negative weight decay");
    for (const auto& p : params_) {
      m_.push_back(Tensor::zeros(p->shape()));
      v_.push_back(Tensor::zeros(p->shape()));
    }
  }

  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw std::invalid_argument("optimizer: grad arity");
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i];
      const Tensor& g = grads[i];
      if (!p.same_shape(g)) throw std::invalid_argument("optimizer: grad shape mismatch");
      switch (cfg_.kind) {
        case OptimizerKind::kSgd:
          for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] -= cfg_.rate * (g[j] + cfg_.weight_decay * p[j]);
          }
          break;
        case OptimizerKind::kRmsProp:
          for (std::size_t j = 0; j < p.size(); ++j) {
            double gj = g[j] + cfg_.weight_decay * p[j];
            v_[i][j] = kRmsPropAlpha * v_[i][j] + (1.0 - kRmsPropAlpha) * gj * gj;
            p[j] -= cfg_.rate * gj / (std::sqrt(v_[i][j]) + kRmsPropEps);
          }
          break;
        case OptimizerKind::kAdam:
        case OptimizerKind::kAdamW: {
          double bc1 = 1.0 - std::pow(kAdamBeta1, t_);
          double bc2 = 1.0 - std::pow(kAdamBeta2, t_);
          for (std::size_t j = 0; j < p.size(); ++j) {
            double gj = g[j];
            if (cfg_.kind == OptimizerKind::kAdam) {
              gj += cfg_.weight_decay * p[j];
            } else {
              p[j] -= cfg_.rate * cfg_.weight_decay * p[j];
            }
            m_[i][j] = kAdamBeta1 * m_[i][j] + (1.0 - kAdamBeta1) * gj;
            v_[i][j] = kAdamBeta2 * v_[i][j] + (1.0 - kAdamBeta2) * gj * gj;
            double mhat = m_[i][j] / bc1;
            double vhat = v_[i][j] / bc2;
            p[j] -= cfg_.rate * mhat / (std::sqrt(vhat) + kAdamEps);
          }
          break;
        }
      }
    }
  }

  int steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::shared_ptr<Tensor>> params_;
  std::vector<Tensor> m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Loss terms.

struct TrainConfig {
  ProjectionMode mode = ProjectionMode::kFGH;
  double k = 0.5;
  bool stop_grad = false;
  double lambda_hj = 0.0;
  double alpha_gamma = 0.0;
  double epsilon = 0.0;
  int hj_sample_count = 64;
  double hj_sample_sigma = 1.0;
  std::vector<Tensor> hj_sample_means;  // defaults to the Lyapunov centers
  OptimizerConfig optimizer;
  int batch_size = 100;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::optional<double> clip_bound = 10.0;
  int val_interval = 25;
  std::optional<Tensor> x0_override;

  void validate() const {
    if (lambda_hj < 0.0 || alpha_gamma < 0.0 || epsilon < 0.0) {
      throw std::invalid_argument("train: loss weights must be non-negative");
    }
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (iterations < 0) throw std::invalid_argument("train: negative iteration count");
    if (hj_sample_count < 1) throw std::invalid_argument("train: need at least one HJ sample");
    if (!(hj_sample_sigma > 0.0)) throw std::invalid_argument("train: sigma must be positive");
    if (k < 0.0 || k > 1.0) throw std::invalid_argument("train: k must lie in [0, 1]");
    if (val_interval < 1) throw std::invalid_argument("train: validation interval must be >= 1");
  }
};

// Discrete L2-squared prediction error of one sequence on the tape.
inline Var sequence_prediction_loss(Tape& t, const DynamicsVars& dv, const LyapunovSpec& lyap,
                                    const Sequence& seq, const Tensor& x0,
                                    const TrainConfig& cfg) {
  RolloutConfig rcfg{.dt = seq.u.dt, .steps = seq.u.steps, .clip_bound = cfg.clip_bound};
  auto field = [&](Tape& tp, const Var& x, const Var& u) {
    return modified_vector_field(tp, dv, lyap, x, u, cfg.mode, cfg.k, cfg.stop_grad);
  };
  Rollout roll = euler_rollout(t, x0, seq.u, field, rcfg);
  Var acc = t.constant_scalar(0.0);
  for (int step = 0; step < seq.u.steps; ++step) {
    Var err = sub(t, roll.y[step], t.constant(seq.y.row(step)));
    acc = add(t, acc, sqnorm(t, err));
  }
  return scale_const(t, acc, seq.u.dt);
}

// An explicit override pins the model's initial state (its Lyapunov level sets
// the output-energy budget); otherwise the dataset's x0 is used when it lives
// in the model's state space.
inline Tensor resolve_x0(const Sequence& seq, int model_dim, const TrainConfig& cfg) {
  if (cfg.x0_override && static_cast<int>(cfg.x0_override->size()) == model_dim) {
    return *cfg.x0_override;
  }
  if (static_cast<int>(seq.x0.size()) == model_dim) return seq.x0;
  throw std::invalid_argument(
      "train: dataset x0 dimension differs from the model state; set an x0 override");
}

// Mean over a set of sequences, values only.
inline double prediction_loss(const Dataset& ds, const std::vector<int>& indices,
                              const NominalDynamics& dyn, const LyapunovSpec& lyap,
                              const TrainConfig& cfg) {
  if (indices.empty()) throw std::invalid_argument("train: empty batch");
  double acc = 0.0;
  for (int id : indices) {
    Tape t;
    t.recording = false;
    DynamicsVars dv(t, dyn);
    const Sequence& seq = ds.sequences.at(id);
    acc += sequence_prediction_loss(t, dv, lyap, seq, resolve_x0(seq, dyn.n, cfg), cfg).scalar();
  }
  return acc / indices.size();
}

inline std::vector<Tensor> draw_hj_samples(const TrainConfig& cfg, const LyapunovSpec& lyap,
                                           int dim, std::mt19937_64& rng) {
  const std::vector<Tensor>& means =
      cfg.hj_sample_means.empty() ? lyap.centers : cfg.hj_sample_means;
  if (means.empty()) throw std::invalid_argument("train: no sample means available");
  for (const Tensor& m : means) {
    if (static_cast<int>(m.size()) != dim) {
      throw std::invalid_argument("train: sample mean dimension mismatch");
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, means.size() - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Tensor> out;
  out.reserve(cfg.hj_sample_count);
  for (int i = 0; i < cfg.hj_sample_count; ++i) {
    const Tensor& mu = means[pick(rng)];
    Tensor x = Tensor::zeros({dim});
    for (int j = 0; j < dim; ++j) x[j] = mu[j] + cfg.hj_sample_sigma * gauss(rng);
    out.push_back(std::move(x));
  }
  return out;
}

// Monte-Carlo hinge penalty on the *nominal* triplet: mean ramp(HJ(x) + eps).
inline Var l_hj_penalty_var(Tape& t, const DynamicsVars& dv, const LyapunovSpec& lyap,
                            const std::vector<Tensor>& samples, double eps) {
  if (samples.empty()) throw std::invalid_argument("train: no HJ samples");
  Var acc = t.constant_scalar(0.0);
  Var gamma = dv.gamma(t);
  for (const Tensor& x : samples) {
    Var xv = t.constant(x);
    Var grad_v = lyapunov_gradient(t, lyap, xv);
    Var hj = hj_function(t, dv.f(t, xv), dv.G(t, xv), dv.h(t, xv), grad_v, gamma);
    acc = add(t, acc, ramp(t, add_const(t, hj, eps)));
  }
  return scale_const(t, acc, 1.0 / samples.size());
}

inline double l_hj_penalty(const NominalDynamics& dyn, const LyapunovSpec& lyap,
                           const TrainConfig& cfg, std::mt19937_64& rng) {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, dyn);
  auto samples = draw_hj_samples(cfg, lyap, dyn.n, rng);
  return l_hj_penalty_var(t, dv, lyap, samples, cfg.epsilon).scalar();
}

// Eq.-style composite: prediction + lambda * L_HJ + alpha * gamma^2.
inline double total_loss(const Dataset& ds, const std::vector<int>& indices,
                         const NominalDynamics& dyn, const LyapunovSpec& lyap,
                         const TrainConfig& cfg, std::mt19937_64& rng) {
  double pred = prediction_loss(ds, indices, dyn, lyap, cfg);
  double hj = l_hj_penalty(dyn, lyap, cfg, rng);
  double gamma = dyn.gamma.value();
  return pred + cfg.lambda_hj * hj + cfg.alpha_gamma * gamma * gamma;
}

// ---------------------------------------------------------------------------
// Training loop.

struct TraceRow {
  int iter = 0;
  double pred_loss = 0.0;
  double hj_loss = 0.0;
  double gamma = 0.0;
  double total = 0.0;
};

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iter,pred_loss,hj_loss,gamma,total\n";
  for (const TraceRow& r : trace) {
    out << r.iter << "," << format_double(r.pred_loss) << "," << format_double(r.hj_loss) << ","
        << format_double(r.gamma) << "," << format_double(r.total) << "\n";
  }
  return out.str();
}

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_iteration = -1;
  double feasibility_worst_hj = -std::numeric_limits<double>::infinity();
  int feasibility_checks = 0;
};

inline double feasibility_spot_check(const NominalDynamics& dyn, const LyapunovSpec& lyap,
                                     const TrainConfig& cfg, std::mt19937_64& rng,
                                     int n_samples = 1000) {
  TrainConfig sample_cfg = cfg;
  sample_cfg.hj_sample_count = n_samples;
  auto samples = draw_hj_samples(sample_cfg, lyap, dyn.n, rng);
  double worst = -std::numeric_limits<double>::infinity();
  for (const Tensor& x : samples) {
    TripletValues tv = eval_modified(dyn, lyap, x, cfg.mode, cfg.k, cfg.stop_grad);
    worst = std::max(worst, tv.hj_modified);
  }
  return worst;
}

inline TrainResult train(const Dataset& ds, NominalDynamics& dyn, const LyapunovSpec& lyap,
                         const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (ds.input_dim() != dyn.m || ds.output_dim() != dyn.l) {
    throw std::invalid_argument("train: dataset channel dims do not match the model");
  }

  std::vector<std::shared_ptr<Tensor>> params = dyn.parameters();
  Optimizer opt(cfg.optimizer, params);
  std::mt19937_64 rng(cfg.seed);

  std::vector<int> train_idx = ds.train_indices();
  std::vector<int> val_idx = ds.val_indices();
  int batch = std::min<int>(cfg.batch_size, static_cast<int>(train_idx.size()));

  TrainResult result;
  std::vector<Tensor> best_params;
  std::vector<int> order;
  std::size_t cursor = 0;

  auto next_batch = [&]() {
    std::vector<int> ids;
    for (int i = 0; i < batch; ++i) {
      if (cursor >= order.size()) {
        order = train_idx;
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      ids.push_back(order[cursor++]);
    }
    return ids;
  };

  bool gamma_grad_needed = cfg.alpha_gamma > 0.0 && dyn.gamma.trainable;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<int> batch_ids = next_batch();
    std::vector<Tensor> grad_acc;
    for (const auto& p : params) grad_acc.push_back(Tensor::zeros(p->shape()));

    double pred_value = 0.0;
    double hj_value = 0.0;
    try {
      for (int id : batch_ids) {
        Tape t;
        DynamicsVars dv(t, dyn);
        const Sequence& seq = ds.sequences.at(id);
        Var loss = sequence_prediction_loss(t, dv, lyap, seq, resolve_x0(seq, dyn.n, cfg), cfg);
        pred_value += loss.scalar() / batch;
        Gradients g = t.backward(scale_const(t, loss, 1.0 / batch));
        std::vector<Var> leaves = dv.parameter_leaves();
        for (std::size_t i = 0; i < leaves.size(); ++i) {
          if (!g.has(leaves[i])) continue;
          const Tensor& gi = g.at(leaves[i]);
          for (std::size_t j = 0; j < gi.size(); ++j) grad_acc[i][j] += gi[j];
        }
      }

      Tape pt;
      DynamicsVars pdv(pt, dyn);
      auto samples = draw_hj_samples(cfg, lyap, dyn.n, rng);
      Var lhj = l_hj_penalty_var(pt, pdv, lyap, samples, cfg.epsilon);
      hj_value = lhj.scalar();
      if (cfg.lambda_hj > 0.0 || gamma_grad_needed) {
        Var penalty = scale_const(pt, lhj, cfg.lambda_hj);
        Var gamma = pdv.gamma(pt);
        penalty = add(pt, penalty, scale_const(pt, mul(pt, gamma, gamma), cfg.alpha_gamma));
        Gradients pg = pt.backward(penalty);
        std::vector<Var> leaves = pdv.parameter_leaves();
        for (std::size_t i = 0; i < leaves.size(); ++i) {
          if (!pg.has(leaves[i])) continue;
          const Tensor& gi = pg.at(leaves[i]);
          for (std::size_t j = 0; j < gi.size(); ++j) grad_acc[i][j] += gi[j];
        }
      }
    } catch (const NonFiniteError& e) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << iter << " (batch";
      for (int id : batch_ids) msg << " " << id;
      msg << "): " << e.what();
      throw TrainingError(msg.str());
    }

    double gamma_value = dyn.gamma.value();
    TraceRow row;
    row.iter = iter;
    row.pred_loss = pred_value;
    row.hj_loss = hj_value;
    row.gamma = gamma_value;
    row.total = pred_value + cfg.lambda_hj * hj_value + cfg.alpha_gamma * gamma_value * gamma_value;
    if (!std::isfinite(row.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << iter << " (batch";
      for (int id : batch_ids) msg << " " << id;
      msg << ")";
      throw TrainingError(msg.str());
    }
    result.trace.push_back(row);
    opt.step(grad_acc);

    bool last = iter == cfg.iterations - 1;
    if (!val_idx.empty() && ((iter + 1) % cfg.val_interval == 0 || last)) {
      double val = prediction_loss(ds, val_idx, dyn, lyap, cfg);
      if (val < result.best_val_loss) {
        result.best_val_loss = val;
        result.best_iteration = iter;
        best_params = dyn.parameter_snapshot();
        if (cfg.mode != ProjectionMode::kNone) {
          double worst = feasibility_spot_check(dyn, lyap, cfg, rng);
          result.feasibility_worst_hj = std::max(result.feasibility_worst_hj, worst);
          ++result.feasibility_checks;
          if (worst > 1e-9) {
            throw TrainingError("projected model violates the HJ inequality: max HJ = " +
                                format_double(worst));
          }
        }
      }
    }
  }

  if (!best_params.empty()) dyn.restore_parameters(best_params);
  return result;
}

}  // namespace hjstab
