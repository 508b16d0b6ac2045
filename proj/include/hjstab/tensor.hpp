#pragma once

// Dense double tensors with a tape-based reverse-mode gradient engine.
// Kinked ops (ramp, clamp, norm2, sqrt at zero) use subgradient zero at the kink.

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hjstab {

class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), values_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<int> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != checked_size(shape_)) {
      throw std::invalid_argument("tensor: values length does not match shape");
    }
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  static Tensor vector(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }

  static Tensor matrix(int rows, int cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }

  static Tensor zeros(const std::vector<int>& shape) { return Tensor(shape); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return values_.size(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double value() const {
    if (values_.size() != 1) throw std::invalid_argument("tensor: not a scalar");
    return values_[0];
  }

  int rows() const {
    if (rank() != 2) throw std::invalid_argument("tensor: not a matrix");
    return shape_[0];
  }
  int cols() const {
    if (rank() != 2) throw std::invalid_argument("tensor: not a matrix");
    return shape_[1];
  }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols() + c]; }
  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : values_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<double> values_;
};

enum class Op {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kTMatVec,
  kOuter,
  kDot,
  kSqnorm,
  kNorm2,
  kRamp,
  kClamp,
  kSqrt,
  kSoftplus,
  kScale,
  kScaleConst,
  kAddConst,
  kReshape,
  kStopGradient,
};

// Handle to a tape node. Always carries the forward value; id is -1 when the
// owning tape was not recording.
struct Var {
  std::shared_ptr<const Tensor> value;
  int id = -1;

  const Tensor& tensor() const { return *value; }
  double scalar() const { return value->value(); }
  const std::vector<int>& shape() const { return value->shape(); }
};

class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> by_node) : by_node_(std::move(by_node)) {}

  bool has(const Var& v) const {
    return v.id >= 0 && v.id < static_cast<int>(by_node_.size()) &&
           by_node_[v.id].size() > 0;
  }

  const Tensor& at(const Var& v) const {
    if (!has(v)) throw std::logic_error("gradients: no gradient recorded for this var");
    return by_node_[v.id];
  }

 private:
  std::vector<Tensor> by_node_;
};

class Tape {
 public:
  bool recording = true;
  bool check_finite = true;

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    std::shared_ptr<const Tensor> value;
    double c0 = 0.0;
    double c1 = 0.0;
  };

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }

  Var leaf(std::shared_ptr<const Tensor> v) {
    check_value(*v, "leaf");
    if (!recording) return Var{std::move(v), -1};
    int id = push(Op::kLeaf, -1, -1, v);
    tracked_.push_back(id);
    return Var{std::move(v), id};
  }

  Var leaf(Tensor v) { return leaf(std::make_shared<const Tensor>(std::move(v))); }

  Var constant(std::shared_ptr<const Tensor> v) {
    check_value(*v, "constant");
    if (!recording) return Var{std::move(v), -1};
    int id = push(Op::kConstant, -1, -1, v);
    return Var{std::move(v), id};
  }

  Var constant(Tensor v) { return constant(std::make_shared<const Tensor>(std::move(v))); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  const std::vector<int>& tracked_leaves() const { return tracked_; }

  // Reverse sweep from a scalar output. Returns per-node gradients; every
  // tracked leaf gets an entry (zeros when disconnected).
  Gradients backward(const Var& out) const {
    if (out.value->size() != 1) {
      throw std::invalid_argument("backward: output must be a scalar");
    }
    if (out.id < 0) throw std::invalid_argument("backward: output is not recorded on a tape");
    std::vector<Tensor> grad(nodes_.size());
    for (int id : tracked_) grad[id] = Tensor::zeros(nodes_[id].value->shape());
    accumulate(grad[out.id], nodes_[out.id].value->shape())[0] += 1.0;
    for (int i = out.id; i >= 0; --i) {
      if (grad[i].size() == 0) continue;
      propagate(i, grad);
    }
    return Gradients(std::move(grad));
  }

  friend Var add(Tape& t, const Var& a, const Var& b);
  friend Var sub(Tape& t, const Var& a, const Var& b);
  friend Var mul(Tape& t, const Var& a, const Var& b);
  friend Var div(Tape& t, const Var& a, const Var& b);
  friend Var matmul(Tape& t, const Var& a, const Var& b);
  friend Var tmatvec(Tape& t, const Var& m, const Var& v);
  friend Var outer(Tape& t, const Var& a, const Var& b);
  friend Var dot(Tape& t, const Var& a, const Var& b);
  friend Var sqnorm(Tape& t, const Var& a);
  friend Var norm2(Tape& t, const Var& a);
  friend Var ramp(Tape& t, const Var& a);
  friend Var clamp(Tape& t, const Var& a, double lo, double hi);
  friend Var sqrt(Tape& t, const Var& a);
  friend Var softplus(Tape& t, const Var& a);
  friend Var scale(Tape& t, const Var& a, const Var& s);
  friend Var scale_const(Tape& t, const Var& a, double c);
  friend Var add_const(Tape& t, const Var& a, double c);
  friend Var reshape(Tape& t, const Var& a, std::vector<int> shape);
  friend Var stop_gradient(Tape& t, const Var& a);

 private:
  int push(Op op, int a, int b, std::shared_ptr<const Tensor> v, double c0 = 0.0,
           double c1 = 0.0) {
    nodes_.push_back(Node{op, a, b, std::move(v), c0, c1});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var emit(Op op, const Var& a, const Var& b, Tensor value, double c0 = 0.0,
           double c1 = 0.0) {
    check_value(value, op_name(op));
    auto sv = std::make_shared<const Tensor>(std::move(value));
    if (!recording) return Var{sv, -1};
    if (a.id < 0 || (b.value && b.id < 0)) {
      throw std::invalid_argument("tape: operand was not recorded on a tape");
    }
    int id = push(op, a.id, b.value ? b.id : -1, sv, c0, c1);
    return Var{std::move(sv), id};
  }

  void check_value(const Tensor& v, const char* where) const {
    if (check_finite && !v.all_finite()) {
      throw NonFiniteError(std::string("non-finite value in ") + where);
    }
  }

  static const char* op_name(Op op) {
    switch (op) {
      case Op::kLeaf: return "leaf";
      case Op::kConstant: return "constant";
      case Op::kAdd: return "add";
      case Op::kSub: return "sub";
      case Op::kMul: return "mul";
      case Op::kDiv: return "div";
      case Op::kMatmul: return "matmul";
      case Op::kTMatVec: return "tmatvec";
      case Op::kOuter: return "outer";
      case Op::kDot: return "dot";
      case Op::kSqnorm: return "sqnorm";
      case Op::kNorm2: return "norm2";
      case Op::kRamp: return "ramp";
      case Op::kClamp: return "clamp";
      case Op::kSqrt: return "sqrt";
      case Op::kSoftplus: return "softplus";
      case Op::kScale: return "scale";
      case Op::kScaleConst: return "scale_const";
      case Op::kAddConst: return "add_const";
      case Op::kReshape: return "reshape";
      case Op::kStopGradient: return "stop_gradient";
    }
    return "?";
  }

  static std::vector<double>& accumulate(Tensor& g, const std::vector<int>& shape) {
    if (g.size() == 0) g = Tensor::zeros(shape);
    return g.values();
  }

  void propagate(int i, std::vector<Tensor>& grad) const {
    const Node& nd = nodes_[i];
    const Tensor& g = grad[i];
    const Tensor& v = *nd.value;
    auto slot = [&](int pid) -> std::vector<double>& {
      return accumulate(grad[pid], nodes_[pid].value->shape());
    };
    switch (nd.op) {
      case Op::kLeaf:
      case Op::kConstant:
      case Op::kStopGradient:
        break;
      case Op::kAdd: {
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) {
          ga[j] += g[j];
          gb[j] += g[j];
        }
        break;
      }
      case Op::kSub: {
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) {
          ga[j] += g[j];
          gb[j] -= g[j];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = *nodes_[nd.a].value;
        const Tensor& b = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) {
          ga[j] += g[j] * b[j];
          gb[j] += g[j] * a[j];
        }
        break;
      }
      case Op::kDiv: {
        const Tensor& b = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        for (std::size_t j = 0; j < g.size(); ++j) {
          ga[j] += g[j] / b[j];
          gb[j] -= g[j] * v[j] / b[j];
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = *nodes_[nd.a].value;
        const Tensor& b = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        int p = a.shape()[0], q = a.shape()[1];
        if (b.rank() == 1) {
          for (int r = 0; r < p; ++r) {
            for (int c = 0; c < q; ++c) {
              ga[static_cast<std::size_t>(r) * q + c] += g[r] * b[c];
              gb[c] += a(r, c) * g[r];
            }
          }
        } else {
          int rdim = b.shape()[1];
          for (int r = 0; r < p; ++r) {
            for (int c = 0; c < q; ++c) {
              double acc = 0.0;
              for (int s = 0; s < rdim; ++s) acc += g[static_cast<std::size_t>(r) * rdim + s] * b(c, s);
              ga[static_cast<std::size_t>(r) * q + c] += acc;
            }
          }
          for (int c = 0; c < q; ++c) {
            for (int s = 0; s < rdim; ++s) {
              double acc = 0.0;
              for (int r = 0; r < p; ++r) acc += a(r, c) * g[static_cast<std::size_t>(r) * rdim + s];
              gb[static_cast<std::size_t>(c) * rdim + s] += acc;
            }
          }
        }
        break;
      }
      case Op::kTMatVec: {
        // v = M^T u with M p-by-q, u length p, v length q.
        const Tensor& m = *nodes_[nd.a].value;
        const Tensor& u = *nodes_[nd.b].value;
        auto& gm = slot(nd.a);
        auto& gu = slot(nd.b);
        int p = m.shape()[0], q = m.shape()[1];
        for (int r = 0; r < p; ++r) {
          for (int c = 0; c < q; ++c) {
            gm[static_cast<std::size_t>(r) * q + c] += u[r] * g[c];
            gu[r] += m(r, c) * g[c];
          }
        }
        break;
      }
      case Op::kOuter: {
        const Tensor& a = *nodes_[nd.a].value;
        const Tensor& b = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        int p = a.shape()[0], q = b.shape()[0];
        for (int r = 0; r < p; ++r) {
          for (int c = 0; c < q; ++c) {
            double gj = g[static_cast<std::size_t>(r) * q + c];
            ga[r] += gj * b[c];
            gb[c] += gj * a[r];
          }
        }
        break;
      }
      case Op::kDot: {
        const Tensor& a = *nodes_[nd.a].value;
        const Tensor& b = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gb = slot(nd.b);
        double gs = g[0];
        for (std::size_t j = 0; j < a.size(); ++j) {
          ga[j] += gs * b[j];
          gb[j] += gs * a[j];
        }
        break;
      }
      case Op::kSqnorm: {
        const Tensor& a = *nodes_[nd.a].value;
        auto& ga = slot(nd.a);
        double gs = 2.0 * g[0];
        for (std::size_t j = 0; j < a.size(); ++j) ga[j] += gs * a[j];
        break;
      }
      case Op::kNorm2: {
        const Tensor& a = *nodes_[nd.a].value;
        if (v[0] > 0.0) {
          auto& ga = slot(nd.a);
          double gs = g[0] / v[0];
          for (std::size_t j = 0; j < a.size(); ++j) ga[j] += gs * a[j];
        }
        break;
      }
      case Op::kRamp: {
        const Tensor& a = *nodes_[nd.a].value;
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (a[j] > 0.0) ga[j] += g[j];
        }
        break;
      }
      case Op::kClamp: {
        const Tensor& a = *nodes_[nd.a].value;
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (a[j] > nd.c0 && a[j] < nd.c1) ga[j] += g[j];
        }
        break;
      }
      case Op::kSqrt: {
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (v[j] > 0.0) ga[j] += 0.5 * g[j] / v[j];
        }
        break;
      }
      case Op::kSoftplus: {
        const Tensor& a = *nodes_[nd.a].value;
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) {
          double x = a[j];
          double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
          ga[j] += g[j] * s;
        }
        break;
      }
      case Op::kScale: {
        const Tensor& a = *nodes_[nd.a].value;
        const Tensor& s = *nodes_[nd.b].value;
        auto& ga = slot(nd.a);
        auto& gs = slot(nd.b);
        double sv = s[0];
        double acc = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
          ga[j] += g[j] * sv;
          acc += g[j] * a[j];
        }
        gs[0] += acc;
        break;
      }
      case Op::kScaleConst: {
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * nd.c0;
        break;
      }
      case Op::kAddConst:
      case Op::kReshape: {
        auto& ga = slot(nd.a);
        for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> tracked_;
};

namespace detail {

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

inline Var add(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().same_shape(b.tensor()), "add: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] + b.tensor()[j];
  return t.emit(Op::kAdd, a, b, std::move(out));
}

inline Var sub(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().same_shape(b.tensor()), "sub: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] - b.tensor()[j];
  return t.emit(Op::kSub, a, b, std::move(out));
}

inline Var mul(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().same_shape(b.tensor()), "mul: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] * b.tensor()[j];
  return t.emit(Op::kMul, a, b, std::move(out));
}

inline Var div(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().same_shape(b.tensor()), "div: shape mismatch");
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] / b.tensor()[j];
  return t.emit(Op::kDiv, a, b, std::move(out));
}

// (p x q) @ (q) -> (p)  or  (p x q) @ (q x r) -> (p x r)
inline Var matmul(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().rank() == 2, "matmul: first operand must be a matrix");
  const Tensor& av = a.tensor();
  const Tensor& bv = b.tensor();
  int p = av.shape()[0], q = av.shape()[1];
  if (bv.rank() == 1) {
    detail::require(bv.shape()[0] == q, "matmul: inner dimension mismatch");
    Tensor out({p});
    for (int r = 0; r < p; ++r) {
      double acc = 0.0;
      for (int c = 0; c < q; ++c) acc += av(r, c) * bv[c];
      out[r] = acc;
    }
    return t.emit(Op::kMatmul, a, b, std::move(out));
  }
  detail::require(bv.rank() == 2 && bv.shape()[0] == q, "matmul: inner dimension mismatch");
  int rdim = bv.shape()[1];
  Tensor out({p, rdim});
  for (int r = 0; r < p; ++r) {
    for (int s = 0; s < rdim; ++s) {
      double acc = 0.0;
      for (int c = 0; c < q; ++c) acc += av(r, c) * bv(c, s);
      out(r, s) = acc;
    }
  }
  return t.emit(Op::kMatmul, a, b, std::move(out));
}

// M^T u with M (p x q), u (p) -> (q)
inline Var tmatvec(Tape& t, const Var& m, const Var& u) {
  detail::require(m.tensor().rank() == 2 && u.tensor().rank() == 1,
                  "tmatvec: expects matrix and vector");
  const Tensor& mv = m.tensor();
  const Tensor& uv = u.tensor();
  int p = mv.shape()[0], q = mv.shape()[1];
  detail::require(uv.shape()[0] == p, "tmatvec: dimension mismatch");
  Tensor out({q});
  for (int c = 0; c < q; ++c) {
    double acc = 0.0;
    for (int r = 0; r < p; ++r) acc += mv(r, c) * uv[r];
    out[c] = acc;
  }
  return t.emit(Op::kTMatVec, m, u, std::move(out));
}

// a b^T with a (p), b (q) -> (p x q)
inline Var outer(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().rank() == 1 && b.tensor().rank() == 1, "outer: expects vectors");
  const Tensor& av = a.tensor();
  const Tensor& bv = b.tensor();
  int p = av.shape()[0], q = bv.shape()[0];
  Tensor out({p, q});
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < q; ++c) out(r, c) = av[r] * bv[c];
  }
  return t.emit(Op::kOuter, a, b, std::move(out));
}

inline Var dot(Tape& t, const Var& a, const Var& b) {
  detail::require(a.tensor().same_shape(b.tensor()), "dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.tensor().size(); ++j) acc += a.tensor()[j] * b.tensor()[j];
  return t.emit(Op::kDot, a, b, Tensor::scalar(acc));
}

inline Var sqnorm(Tape& t, const Var& a) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.tensor().size(); ++j) acc += a.tensor()[j] * a.tensor()[j];
  return t.emit(Op::kSqnorm, a, Var{}, Tensor::scalar(acc));
}

inline Var norm2(Tape& t, const Var& a) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.tensor().size(); ++j) acc += a.tensor()[j] * a.tensor()[j];
  return t.emit(Op::kNorm2, a, Var{}, Tensor::scalar(std::sqrt(acc)));
}

inline Var ramp(Tape& t, const Var& a) {
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] > 0.0 ? a.tensor()[j] : 0.0;
  return t.emit(Op::kRamp, a, Var{}, std::move(out));
}

inline Var clamp(Tape& t, const Var& a, double lo, double hi) {
  detail::require(lo <= hi, "clamp: lower bound exceeds upper bound");
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double x = a.tensor()[j];
    out[j] = x < lo ? lo : (x > hi ? hi : x);
  }
  return t.emit(Op::kClamp, a, Var{}, std::move(out), lo, hi);
}

inline Var sqrt(Tape& t, const Var& a) {
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) {
    detail::require(a.tensor()[j] >= 0.0, "sqrt: negative input");
    out[j] = std::sqrt(a.tensor()[j]);
  }
  return t.emit(Op::kSqrt, a, Var{}, std::move(out));
}

inline double softplus_value(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline Var softplus(Tape& t, const Var& a) {
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = softplus_value(a.tensor()[j]);
  return t.emit(Op::kSoftplus, a, Var{}, std::move(out));
}

inline Var scale(Tape& t, const Var& a, const Var& s) {
  detail::require(s.tensor().size() == 1, "scale: scale factor must be a scalar");
  double sv = s.tensor()[0];
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] * sv;
  return t.emit(Op::kScale, a, s, std::move(out));
}

inline Var scale_const(Tape& t, const Var& a, double c) {
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] * c;
  return t.emit(Op::kScaleConst, a, Var{}, std::move(out), c);
}

inline Var add_const(Tape& t, const Var& a, double c) {
  Tensor out(a.shape());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = a.tensor()[j] + c;
  return t.emit(Op::kAddConst, a, Var{}, std::move(out), c);
}

inline Var reshape(Tape& t, const Var& a, std::vector<int> shape) {
  Tensor out(std::move(shape), a.tensor().values());
  return t.emit(Op::kReshape, a, Var{}, std::move(out));
}

inline Var stop_gradient(Tape& t, const Var& a) {
  return t.emit(Op::kStopGradient, a, Var{}, a.tensor());
}

}  // namespace hjstab
