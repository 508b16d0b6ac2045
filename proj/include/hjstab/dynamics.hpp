#pragma once

// Nominal system triplet (f, G, h) built from ReLU MLPs, the softplus gain
// parametrization, and quadratic / min-mixture Lyapunov candidates.

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjstab/tensor.hpp"

namespace hjstab {

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  double output_scale = 1.0;

  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(output_dim);
    return dims;
  }
};

// Fully connected net: ReLU on hidden layers, affine output layer, optional
// constant output scaling.
struct Mlp {
  MlpSpec spec;
  std::vector<std::shared_ptr<Tensor>> weights;
  std::vector<std::shared_ptr<Tensor>> biases;

  static Mlp make(MlpSpec spec) {
    Mlp mlp;
    mlp.spec = std::move(spec);
    auto dims = mlp.spec.layer_dims();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      mlp.weights.push_back(std::make_shared<Tensor>(std::vector<int>{dims[i + 1], dims[i]}));
      mlp.biases.push_back(std::make_shared<Tensor>(std::vector<int>{dims[i + 1]}));
    }
    return mlp;
  }

  int layer_count() const { return static_cast<int>(weights.size()); }

  void init(std::mt19937_64& rng) {
    auto dims = spec.layer_dims();
    for (int i = 0; i < layer_count(); ++i) {
      double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : weights[i]->values()) v = dist(rng);
      for (auto& v : biases[i]->values()) v = dist(rng);
    }
  }
};

// gamma = softplus(theta) + floor, keeping the gain strictly positive.
struct GammaParam {
  static constexpr double kFloor = 1e-3;

  bool trainable = false;
  std::shared_ptr<Tensor> theta = std::make_shared<Tensor>(Tensor::scalar(0.0));

  static double theta_for(double gamma_value) {
    if (gamma_value <= kFloor) {
      throw std::invalid_argument("gamma: value must exceed the floor 1e-3");
    }
    double y = gamma_value - kFloor;
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
  }

  static GammaParam fixed(double gamma_value) {
    GammaParam g;
    g.trainable = false;
    g.theta = std::make_shared<Tensor>(Tensor::scalar(theta_for(gamma_value)));
    return g;
  }

  static GammaParam trainable_init(double gamma_value) {
    GammaParam g = fixed(gamma_value);
    g.trainable = true;
    return g;
  }

  double value() const { return softplus_value(theta->value()) + kFloor; }
};

// V(x) = w * min_i ||x - c_i||^2. A single center is the quadratic case.
// Exact ties pick the lowest branch index.
struct LyapunovSpec {
  std::vector<Tensor> centers;
  double weight = 0.5;

  static LyapunovSpec quadratic(Tensor center, double weight = 0.5) {
    LyapunovSpec s;
    s.centers.push_back(std::move(center));
    s.weight = weight;
    return s;
  }

  static LyapunovSpec mixture(std::vector<Tensor> centers, double weight = 0.5) {
    if (centers.empty()) throw std::invalid_argument("lyapunov: needs at least one center");
    LyapunovSpec s;
    s.centers = std::move(centers);
    s.weight = weight;
    return s;
  }

  int dim() const { return static_cast<int>(centers.front().size()); }

  int argmin_branch(const Tensor& x) const {
    if (x.size() != centers.front().size()) {
      throw std::invalid_argument("lyapunov: state dimension mismatch");
    }
    int best = 0;
    double best_d = sq_dist(x, centers[0]);
    for (std::size_t i = 1; i < centers.size(); ++i) {
      double d = sq_dist(x, centers[i]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  double value(const Tensor& x) const {
    return weight * sq_dist(x, centers[argmin_branch(x)]);
  }

  Tensor gradient(const Tensor& x) const {
    const Tensor& c = centers[argmin_branch(x)];
    Tensor g(x.shape());
    for (std::size_t j = 0; j < x.size(); ++j) g[j] = 2.0 * weight * (x[j] - c[j]);
    return g;
  }

 private:
  static double sq_dist(const Tensor& x, const Tensor& c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      double d = x[j] - c[j];
      acc += d * d;
    }
    return acc;
  }
};

inline Var lyapunov_value(Tape& t, const LyapunovSpec& s, const Var& x) {
  int i = s.argmin_branch(x.tensor());
  Var d = sub(t, x, t.constant(s.centers[i]));
  return scale_const(t, sqnorm(t, d), s.weight);
}

inline Var lyapunov_gradient(Tape& t, const LyapunovSpec& s, const Var& x) {
  int i = s.argmin_branch(x.tensor());
  Var d = sub(t, x, t.constant(s.centers[i]));
  return scale_const(t, d, 2.0 * s.weight);
}

// f: R^n -> R^n, G: R^n -> R^{n x m} (row-major n*m output), h: R^n -> R^l.
struct NominalDynamics {
  int n = 0, m = 0, l = 0;
  Mlp f, g, h;
  GammaParam gamma;

  static NominalDynamics make(int n, int m, int l, std::vector<int> f_hidden,
                              std::vector<int> g_hidden, std::vector<int> h_hidden,
                              double f_scale, GammaParam gamma_param) {
    NominalDynamics d;
    d.n = n;
    d.m = m;
    d.l = l;
    d.f = Mlp::make({n, std::move(f_hidden), n, f_scale});
    d.g = Mlp::make({n, std::move(g_hidden), n * m, 1.0});
    d.h = Mlp::make({n, std::move(h_hidden), l, 1.0});
    d.gamma = std::move(gamma_param);
    return d;
  }

  void init(std::mt19937_64& rng) {
    f.init(rng);
    g.init(rng);
    h.init(rng);
  }

  // Fixed order: f layers, g layers, h layers (weight then bias per layer),
  // then theta when the gain is trainable.
  std::vector<std::shared_ptr<Tensor>> parameters() {
    std::vector<std::shared_ptr<Tensor>> out;
    for (Mlp* mlp : {&f, &g, &h}) {
      for (int i = 0; i < mlp->layer_count(); ++i) {
        out.push_back(mlp->weights[i]);
        out.push_back(mlp->biases[i]);
      }
    }
    if (gamma.trainable) out.push_back(gamma.theta);
    return out;
  }

  std::vector<Tensor> parameter_snapshot() {
    std::vector<Tensor> snap;
    for (const auto& p : parameters()) snap.push_back(*p);
    return snap;
  }

  void restore_parameters(const std::vector<Tensor>& snap) {
    auto params = parameters();
    if (snap.size() != params.size()) {
      throw std::invalid_argument("dynamics: parameter snapshot size mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = snap[i];
  }

  Tensor eval_f(const Tensor& x) const;
  Tensor eval_g(const Tensor& x) const;
  Tensor eval_h(const Tensor& x) const;
};

// Per-tape binding of one model: parameters become tracked leaves once, shared
// by every evaluation on that tape.
struct DynamicsVars {
  const NominalDynamics* model;
  std::vector<Var> f_w, f_b, g_w, g_b, h_w, h_b;
  Var theta;

  DynamicsVars(Tape& t, const NominalDynamics& dyn) : model(&dyn) {
    bind(t, dyn.f, f_w, f_b);
    bind(t, dyn.g, g_w, g_b);
    bind(t, dyn.h, h_w, h_b);
    theta = dyn.gamma.trainable ? t.leaf(dyn.gamma.theta) : t.constant(dyn.gamma.theta);
  }

  Var f(Tape& t, const Var& x) const { return apply(t, model->f, f_w, f_b, x); }

  Var G(Tape& t, const Var& x) const {
    Var flat = apply(t, model->g, g_w, g_b, x);
    return reshape(t, flat, {model->n, model->m});
  }

  Var h(Tape& t, const Var& x) const { return apply(t, model->h, h_w, h_b, x); }

  Var gamma(Tape& t) const {
    return add_const(t, softplus(t, theta), GammaParam::kFloor);
  }

  // Parameter leaves in the NominalDynamics::parameters() order.
  std::vector<Var> parameter_leaves() const {
    std::vector<Var> out;
    auto append = [&out](const std::vector<Var>& w, const std::vector<Var>& b) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        out.push_back(w[i]);
        out.push_back(b[i]);
      }
    };
    append(f_w, f_b);
    append(g_w, g_b);
    append(h_w, h_b);
    if (model->gamma.trainable) out.push_back(theta);
    return out;
  }

 private:
  static void bind(Tape& t, const Mlp& mlp, std::vector<Var>& w, std::vector<Var>& b) {
    for (int i = 0; i < mlp.layer_count(); ++i) {
      w.push_back(t.leaf(mlp.weights[i]));
      b.push_back(t.leaf(mlp.biases[i]));
    }
  }

  static Var apply(Tape& t, const Mlp& mlp, const std::vector<Var>& w,
                   const std::vector<Var>& b, const Var& x) {
    if (static_cast<int>(x.tensor().size()) != mlp.spec.input_dim) {
      throw std::invalid_argument("mlp: input dimension mismatch");
    }
    Var cur = x;
    int layers = mlp.layer_count();
    for (int i = 0; i < layers; ++i) {
      cur = add(t, matmul(t, w[i], cur), b[i]);
      if (i + 1 < layers) cur = ramp(t, cur);
    }
    if (mlp.spec.output_scale != 1.0) cur = scale_const(t, cur, mlp.spec.output_scale);
    return cur;
  }
};

inline Tensor NominalDynamics::eval_f(const Tensor& x) const {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, *this);
  return dv.f(t, t.constant(x)).tensor();
}

inline Tensor NominalDynamics::eval_g(const Tensor& x) const {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, *this);
  return dv.G(t, t.constant(x)).tensor();
}

inline Tensor NominalDynamics::eval_h(const Tensor& x) const {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, *this);
  return dv.h(t, t.constant(x)).tensor();
}

}  // namespace hjstab
