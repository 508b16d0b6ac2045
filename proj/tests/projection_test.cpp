#include "hjstab/projection.hpp"

#include <gtest/gtest.h>

#include <random>

#include "hjstab/qcqp.hpp"
#include "test_util.hpp"

namespace hjstab {
namespace {

using testutil::random_tensor;

struct RawTriplet {
  Tensor f, G, h, beta;
  double gamma = 1.0;
};

double hj_value(const Tensor& f, const Tensor& G, const Tensor& h, const Tensor& beta,
                double gamma) {
  Tape t;
  t.recording = false;
  return hj_function(t, t.constant(f), t.constant(G), t.constant(h), t.constant(beta),
                     t.constant(Tensor::scalar(gamma)))
      .scalar();
}

struct ProjectedValues {
  Tensor f, G, h;
};

ProjectedValues project_raw(ProjectionMode mode, const RawTriplet& r, double k,
                            bool stop_grad = false) {
  Tape t;
  t.recording = false;
  auto m = project(t, mode, t.constant(r.f), t.constant(r.G), t.constant(r.h),
                   t.constant(r.beta), t.constant(Tensor::scalar(r.gamma)), k, stop_grad);
  return {m.f.tensor(), m.G.tensor(), m.h.tensor()};
}

RawTriplet random_triplet(int n, int m, int l, std::mt19937_64& rng) {
  RawTriplet r;
  r.f = random_tensor({n}, rng, -2.0, 2.0);
  r.G = random_tensor({n, m}, rng, -2.0, 2.0);
  r.h = random_tensor({l}, rng, -2.0, 2.0);
  r.beta = random_tensor({n}, rng, -2.0, 2.0);
  std::uniform_real_distribution<double> logg(std::log(0.1), std::log(10.0));
  r.gamma = std::exp(logg(rng));
  return r;
}

double sqnorm_value(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return acc;
}

TEST(HjFunction, DriftOnlyTerm) {
  EXPECT_DOUBLE_EQ(hj_value(Tensor::vector({-1.0}), Tensor::matrix(1, 1, {0.0}),
                            Tensor::vector({0.0}), Tensor::vector({1.0}), 1.0),
                   -1.0);
}

TEST(HjFunction, GainTerm) {
  EXPECT_DOUBLE_EQ(hj_value(Tensor::vector({0.0}), Tensor::matrix(1, 1, {1.0}),
                            Tensor::vector({0.0}), Tensor::vector({2.0}), 1.0),
                   2.0);
}

TEST(HjFunction, BistableCrossCheck) {
  // f = x(1-x^2), G = 1, h = x at x = 0.5 with V = min((x-1)^2, (x+1)^2).
  double x = 0.5;
  double f = x * (1.0 - x * x);
  double beta = 2.0 * (x - 1.0);
  double expected = beta * f + 0.5 * beta * beta + 0.5 * x * x;
  EXPECT_DOUBLE_EQ(hj_value(Tensor::vector({f}), Tensor::matrix(1, 1, {1.0}),
                            Tensor::vector({x}), Tensor::vector({beta}), 1.0),
                   expected);
  EXPECT_DOUBLE_EQ(expected, -0.375 + 0.5 + 0.125);
}

TEST(HjFunction, RejectsNonPositiveGamma) {
  Tape t;
  Var f = t.constant(Tensor::vector({1.0}));
  Var G = t.constant(Tensor::matrix(1, 1, {1.0}));
  Var h = t.constant(Tensor::vector({1.0}));
  Var beta = t.constant(Tensor::vector({1.0}));
  EXPECT_THROW(hj_function(t, f, G, h, beta, t.constant_scalar(0.0)), std::invalid_argument);
  EXPECT_THROW(hj_function(t, f, G, h, beta, t.constant_scalar(-1.0)), std::invalid_argument);
}

TEST(HjTerms, InvariantsHold) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    auto r = random_triplet(1 + int(rng() % 3), 1 + int(rng() % 3), 1 + int(rng() % 3), rng);
    if (sqnorm_value(r.beta) < 1e-6) continue;
    Tape t;
    t.recording = false;
    auto terms = hj_terms(t, t.constant(r.f), t.constant(r.G), t.constant(r.h),
                          t.constant(r.beta), t.constant(Tensor::scalar(r.gamma)));
    EXPECT_GE(terms.v_g.scalar(), 0.0);
    EXPECT_GE(terms.v_gh.scalar(), 0.0);
    EXPECT_GE(terms.gradnorm2.scalar(), 0.0);
    const Tensor& p = terms.p_v.tensor();
    int n = p.rows();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        EXPECT_NEAR(p(i, j), p(j, i), 1e-12);
        double pp = 0.0;
        for (int s = 0; s < n; ++s) pp += p(i, s) * p(s, j);
        EXPECT_NEAR(pp, p(i, j), 1e-10);
      }
    }
  }
}

TEST(ProjectFgh, IdentityOnStrictlyFeasiblePoints) {
  RawTriplet r;
  r.f = Tensor::vector({-3.0});
  r.G = Tensor::matrix(1, 1, {0.5});
  r.h = Tensor::vector({0.5});
  r.beta = Tensor::vector({1.0});
  r.gamma = 1.0;
  // V_f = -3, V_Gh = 0.125 + 0.125 = 0.25, ratio = 12 >= 1, ramp arg < 0.
  auto out = project_raw(ProjectionMode::kFGH, r, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0]);
  EXPECT_DOUBLE_EQ(out.G[0], r.G[0]);
  EXPECT_DOUBLE_EQ(out.h[0], r.h[0]);
}

TEST(ProjectFgh, KZeroReducesToDriftSubtraction) {
  RawTriplet r;
  r.f = Tensor::vector({2.0});
  r.G = Tensor::matrix(1, 1, {0.0});
  r.h = Tensor::vector({0.0});
  r.beta = Tensor::vector({1.0});
  auto out = project_raw(ProjectionMode::kFGH, r, 0.0);
  EXPECT_DOUBLE_EQ(out.f[0], 0.0);
}

TEST(ProjectFgh, KOneActiveConstraintWorkedExample) {
  RawTriplet r;
  r.f = Tensor::vector({1.0});
  r.G = Tensor::matrix(1, 1, {1.0});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0});
  auto out = project_raw(ProjectionMode::kFGH, r, 1.0);
  EXPECT_DOUBLE_EQ(out.f[0], -1.0);
  EXPECT_DOUBLE_EQ(out.G[0], 1.0);
  EXPECT_DOUBLE_EQ(out.h[0], 1.0);
  EXPECT_NEAR(hj_value(out.f, out.G, out.h, r.beta, r.gamma), 0.0, 1e-15);
}

TEST(ProjectFgh, DegenerateGradientReturnsNominal) {
  RawTriplet r;
  r.f = Tensor::vector({5.0, -2.0});
  r.G = Tensor::matrix(2, 1, {1.0, 1.0});
  r.h = Tensor::vector({3.0});
  r.beta = Tensor::vector({0.0, 0.0});
  for (auto mode : {ProjectionMode::kFGH, ProjectionMode::kF, ProjectionMode::kFG}) {
    auto out = project_raw(mode, r, 0.5);
    EXPECT_EQ(out.f.values(), r.f.values());
    EXPECT_EQ(out.G.values(), r.G.values());
    EXPECT_EQ(out.h.values(), r.h.values());
  }
}

TEST(ProjectFgh, DegenerateVghBranch) {
  RawTriplet pos;
  pos.f = Tensor::vector({1.0});
  pos.G = Tensor::matrix(1, 1, {0.0});
  pos.h = Tensor::vector({0.0});
  pos.beta = Tensor::vector({1.0});
  auto out = project_raw(ProjectionMode::kFGH, pos, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], 0.0);
  EXPECT_NEAR(hj_value(out.f, out.G, out.h, pos.beta, pos.gamma), 0.0, 1e-15);

  RawTriplet neg = pos;
  neg.f = Tensor::vector({-1.0});
  out = project_raw(ProjectionMode::kFGH, neg, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], -1.0);
}

TEST(ProjectF, IdentityWhenFeasible) {
  RawTriplet r;
  r.f = Tensor::vector({-2.0});
  r.G = Tensor::matrix(1, 1, {0.5});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0});
  auto out = project_raw(ProjectionMode::kF, r, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0]);
}

TEST(ProjectF, DirectShiftFormula) {
  RawTriplet r;
  r.f = Tensor::vector({2.0, 1.0});
  r.G = Tensor::matrix(2, 1, {1.0, 0.0});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0, 0.0});
  double hj = hj_value(r.f, r.G, r.h, r.beta, r.gamma);
  EXPECT_DOUBLE_EQ(hj, 3.0);
  auto out = project_raw(ProjectionMode::kF, r, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0] - 3.0);
  EXPECT_DOUBLE_EQ(out.f[1], r.f[1]);
  EXPECT_EQ(out.G.values(), r.G.values());
  EXPECT_EQ(out.h.values(), r.h.values());
}

TEST(ProjectF, PostValueEqualsMinOfZeroAndHj) {
  std::mt19937_64 rng(33);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto r = random_triplet(1 + int(rng() % 3), 1 + int(rng() % 3), 1 + int(rng() % 3), rng);
    if (sqnorm_value(r.beta) < 1e-6) continue;
    r.gamma = std::max(r.gamma, 0.5);
    double before = hj_value(r.f, r.G, r.h, r.beta, r.gamma);
    if (std::abs(before) > 300.0) continue;
    auto out = project_raw(ProjectionMode::kF, r, 0.5);
    double after = hj_value(out.f, out.G, out.h, r.beta, r.gamma);
    double expected = before < 0.0 ? before : 0.0;
    worst = std::max(worst, std::abs(after - expected) / std::max(1.0, std::abs(before)));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(ProjectFg, IdentityWhenConditionsHold) {
  RawTriplet r;
  r.f = Tensor::vector({-4.0});
  r.G = Tensor::matrix(1, 1, {1.0});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0});
  // V_fh = -4 + 0.5 = -3.5, V_G = 0.5, V_fh + V_G < 0 and -V_fh/V_G = 7 >= 1.
  auto out = project_raw(ProjectionMode::kFG, r, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0]);
  EXPECT_DOUBLE_EQ(out.G[0], r.G[0]);
}

TEST(ProjectFg, KOneKeepsGAndShiftsF) {
  RawTriplet r;
  r.f = Tensor::vector({1.0});
  r.G = Tensor::matrix(1, 1, {1.5});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0});
  double v_fh = 1.0 + 0.5;
  double v_g = 0.5 * 1.5 * 1.5;
  auto out = project_raw(ProjectionMode::kFG, r, 1.0);
  EXPECT_DOUBLE_EQ(out.G[0], r.G[0]);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0] - (v_fh + v_g));
  EXPECT_EQ(out.h.values(), r.h.values());
}

TEST(ProjectFg, HAlwaysBitExact) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    auto r = random_triplet(2, 2, 2, rng);
    std::uniform_real_distribution<double> kd(0.0, 1.0);
    auto out = project_raw(ProjectionMode::kFG, r, kd(rng));
    EXPECT_EQ(out.h.values(), r.h.values());
  }
}

TEST(Property, FeasibilityAllModes) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> kd(0.0, 1.0);
  for (auto mode : {ProjectionMode::kFGH, ProjectionMode::kF, ProjectionMode::kFG}) {
    double worst = -1e300;
    for (int trial = 0; trial < 2000; ++trial) {
      auto r = random_triplet(1 + int(rng() % 3), 1 + int(rng() % 3), 1 + int(rng() % 3), rng);
      if (sqnorm_value(r.beta) < 1e-12) continue;
      auto out = project_raw(mode, r, kd(rng));
      worst = std::max(worst, hj_value(out.f, out.G, out.h, r.beta, r.gamma));
    }
    EXPECT_LE(worst, 1e-9) << to_string(mode);
  }
}

TEST(Property, OutputShrinkageAndGDirection) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> kd(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 1 + int(rng() % 3), m = 1 + int(rng() % 3), l = 1 + int(rng() % 3);
    auto r = random_triplet(n, m, l, rng);
    if (sqnorm_value(r.beta) < 1e-6) continue;
    auto out = project_raw(ProjectionMode::kFGH, r, kd(rng));
    EXPECT_LE(sqnorm_value(out.h), sqnorm_value(r.h) * (1.0 + 1e-12));

    // (I - P_V)(G_m - G_n) = 0: the update must lie along beta.
    double b2 = sqnorm_value(r.beta);
    for (int col = 0; col < m; ++col) {
      double proj = 0.0;
      for (int row = 0; row < n; ++row) proj += r.beta[row] * (out.G(row, col) - r.G(row, col));
      for (int row = 0; row < n; ++row) {
        double delta = out.G(row, col) - r.G(row, col);
        double along = r.beta[row] * proj / b2;
        EXPECT_NEAR(delta - along, 0.0, 1e-10);
      }
    }
  }
}

// Dense constrained search used as minimality ground truth. Variables are the
// stacked maps; feasibility is HJ <= slack; descent by compass search.
struct OracleProblem {
  ProjectionMode mode;
  RawTriplet nom;
  double k = 0.5;

  int n() const { return static_cast<int>(nom.f.size()); }
  int m() const { return nom.G.cols(); }
  int l() const { return static_cast<int>(nom.h.size()); }

  int dims() const {
    switch (mode) {
      case ProjectionMode::kF: return n();
      case ProjectionMode::kFG: return n() + n() * m();
      default: return n() + n() * m() + l();
    }
  }

  void unpack(const std::vector<double>& v, Tensor& f, Tensor& G, Tensor& h) const {
    f = nom.f;
    G = nom.G;
    h = nom.h;
    int at = 0;
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = v[at++];
    if (mode != ProjectionMode::kF) {
      for (std::size_t i = 0; i < G.size(); ++i) G[i] = v[at++];
    }
    if (mode == ProjectionMode::kFGH) {
      for (std::size_t i = 0; i < h.size(); ++i) h[i] = v[at++];
    }
  }

  std::vector<double> pack(const Tensor& f, const Tensor& G, const Tensor& h) const {
    std::vector<double> v;
    for (std::size_t i = 0; i < f.size(); ++i) v.push_back(f[i]);
    if (mode != ProjectionMode::kF) {
      for (std::size_t i = 0; i < G.size(); ++i) v.push_back(G[i]);
    }
    if (mode == ProjectionMode::kFGH) {
      for (std::size_t i = 0; i < h.size(); ++i) v.push_back(h[i]);
    }
    return v;
  }

  double hj(const std::vector<double>& v) const {
    Tensor f, G, h;
    unpack(v, f, G, h);
    return hj_value(f, G, h, nom.beta, nom.gamma);
  }

  double objective(const std::vector<double>& v) const {
    Tensor f, G, h;
    unpack(v, f, G, h);
    double df = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      double d = f[i] - nom.f[i];
      df += d * d;
    }
    double b2 = sqnorm_value(nom.beta);
    if (mode == ProjectionMode::kF) return std::sqrt(df);
    double dg = 0.0;
    for (std::size_t i = 0; i < G.size(); ++i) {
      double d = G[i] - nom.G[i];
      dg += d * d;
    }
    double obj = (1.0 - k) / std::sqrt(b2) * std::sqrt(df) +
                 k / (2.0 * nom.gamma * nom.gamma) * dg;
    if (mode == ProjectionMode::kFGH) {
      double dh = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        double d = h[i] - nom.h[i];
        dh += d * d;
      }
      obj += k / (2.0 * b2) * dh;
    }
    return obj;
  }
};

double compass_search(const OracleProblem& p, std::vector<double> x, double step,
                      double& best_obj) {
  constexpr double kSlack = 1e-9;
  if (p.hj(x) > kSlack) return best_obj;
  double obj = p.objective(x);
  best_obj = std::min(best_obj, obj);
  int d = p.dims();
  while (step > 1e-10) {
    bool improved = false;
    for (int i = 0; i < d; ++i) {
      for (double sgn : {1.0, -1.0}) {
        std::vector<double> cand = x;
        cand[i] += sgn * step;
        if (p.hj(cand) > kSlack) continue;
        double v = p.objective(cand);
        if (v < obj - 1e-15) {
          obj = v;
          x = cand;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  best_obj = std::min(best_obj, obj);
  return best_obj;
}

double oracle_best(const OracleProblem& p, const std::vector<double>& closed_point) {
  int d = p.dims();
  std::vector<double> nominal = p.pack(p.nom.f, p.nom.G, p.nom.h);
  std::vector<double> lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    double a = std::min({0.0, nominal[i], closed_point[i]});
    double b = std::max({0.0, nominal[i], closed_point[i]});
    double margin = 0.5 * (b - a) + 1.5;
    lo[i] = a - margin;
    hi[i] = b + margin;
  }
  int g = d == 1 ? 201 : (d == 2 ? 41 : 17);
  double best = 1e300;
  std::vector<double> best_x;
  std::vector<double> x(d);
  int total = 1;
  for (int i = 0; i < d; ++i) total *= g;
  for (int flat = 0; flat < total; ++flat) {
    int rem = flat;
    for (int i = 0; i < d; ++i) {
      x[i] = lo[i] + (hi[i] - lo[i]) * (rem % g) / (g - 1);
      rem /= g;
    }
    if (p.hj(x) > 1e-9) continue;
    double v = p.objective(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  double max_width = 0.0;
  for (int i = 0; i < d; ++i) max_width = std::max(max_width, hi[i] - lo[i]);
  if (!best_x.empty()) compass_search(p, best_x, max_width / g, best);
  compass_search(p, closed_point, max_width / g, best);
  return best;
}

TEST(Property, MinimalityAgainstDenseOracle) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> kd(0.05, 0.95);
  int tested = 0;
  while (tested < 200) {
    OracleProblem p;
    int pick = tested % 5;
    if (pick < 2) {
      p.mode = ProjectionMode::kFGH;
      p.nom = random_triplet(1, 1, 1, rng);
    } else if (pick < 4) {
      p.mode = ProjectionMode::kFG;
      int m = 1 + int(rng() % 2);
      p.nom = random_triplet(1, m, 1, rng);
    } else {
      p.mode = ProjectionMode::kF;
      int n = 1 + int(rng() % 3);
      p.nom = random_triplet(n, 1, 1, rng);
    }
    if (sqnorm_value(p.nom.beta) < 0.05) continue;
    std::uniform_real_distribution<double> logg(std::log(0.3), std::log(3.0));
    p.nom.gamma = std::exp(logg(rng));
    p.k = kd(rng);
    // Bias toward active constraints: feasible draws are trivially optimal.
    if (tested % 4 != 3 && hj_value(p.nom.f, p.nom.G, p.nom.h, p.nom.beta, p.nom.gamma) <= 0.0) {
      for (std::size_t i = 0; i < p.nom.f.size(); ++i) {
        p.nom.f[i] += 3.0 * (p.nom.beta[i] >= 0.0 ? 1.0 : -1.0);
      }
    }
    auto out = project_raw(p.mode, p.nom, p.k);
    auto closed_point = p.pack(out.f, out.G, out.h);
    double closed_obj = p.objective(closed_point);
    double oracle_obj = oracle_best(p, closed_point);
    EXPECT_LE(closed_obj, oracle_obj + 1e-6)
        << to_string(p.mode) << " instance " << tested << " gap "
        << closed_obj - oracle_obj;
    ++tested;
  }
}

TEST(Property, MatchesQcqpSolutionMap) {
  std::mt19937_64 rng(38);
  std::uniform_real_distribution<double> kd(0.1, 0.9);
  int tested = 0;
  while (tested < 200) {
    int n = 1 + int(rng() % 3), m = 1 + int(rng() % 3), l = 1 + int(rng() % 3);
    auto r = random_triplet(n, m, l, rng);
    double b2 = sqnorm_value(r.beta);
    if (b2 < 0.1 || sqnorm_value(r.h) < 0.1) continue;
    double k = kd(rng);

    double hj_n = hj_value(r.f, r.G, r.h, r.beta, r.gamma);
    double h2 = sqnorm_value(r.h);
    QcqpInstance inst;
    inst.A = Eigen::MatrixXd::Zero(m + 1, m + 1);
    inst.A.topLeftCorner(m, m) =
        b2 / (2.0 * r.gamma * r.gamma) * Eigen::MatrixXd::Identity(m, m);
    inst.A(m, m) = h2 / (2.0 * b2);
    inst.b = Eigen::VectorXd::Zero(m + 1);
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += r.G(i, j) * r.beta[i];
      inst.b[j] = acc / (2.0 * r.gamma * r.gamma);
    }
    inst.b[m] = h2 / (2.0 * b2);
    inst.c = hj_n / b2;
    inst.k_x = k;
    inst.k_y = 1.0 - k;

    auto sol = solve_closed_form(inst);
    double p_star = sol.y_star;
    double r_star = sol.x_star[m];

    auto out = project_raw(ProjectionMode::kFGH, r, k);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(out.f[i], r.f[i] - r.beta[i] * p_star, 1e-10);
      for (int j = 0; j < m; ++j) {
        EXPECT_NEAR(out.G(i, j), r.G(i, j) - r.beta[i] * sol.x_star[j], 1e-10);
      }
    }
    for (int i = 0; i < l; ++i) EXPECT_NEAR(out.h[i], (1.0 - r_star) * r.h[i], 1e-10);
    ++tested;
  }
}

Var projection_loss(Tape& t, std::vector<Var>& in, ProjectionMode mode, double k,
                    bool stop_grad) {
  Var f = in[0];
  Var G = in[1];
  Var h = in[2];
  Var beta = in[3];
  Var gamma = in[4];
  auto m = project(t, mode, f, G, h, beta, gamma, k, stop_grad);
  Var out = add(t, sqnorm(t, m.f), add(t, sqnorm(t, m.G), sqnorm(t, m.h)));
  return out;
}

bool near_kink(const RawTriplet& r, double k, ProjectionMode mode) {
  double b2 = sqnorm_value(r.beta);
  if (b2 < 1e-3) return true;
  Tape t;
  t.recording = false;
  auto terms = hj_terms(t, t.constant(r.f), t.constant(r.G), t.constant(r.h),
                        t.constant(r.beta), t.constant(Tensor::scalar(r.gamma)));
  double v_f = terms.v_f.scalar(), v_g = terms.v_g.scalar(), v_gh = terms.v_gh.scalar();
  double v_fh = terms.v_fh.scalar();
  auto close = [](double a, double b) { return std::abs(a - b) < 1e-3; };
  if (mode == ProjectionMode::kF) {
    return std::abs(v_f + v_gh) < 1e-3;
  }
  double num = mode == ProjectionMode::kFG ? v_fh : v_f;
  double den = mode == ProjectionMode::kFG ? v_g : v_gh;
  if (den < 1e-3) return true;
  double ratio = -num / den;
  if (close(ratio, k * k) || close(ratio, 1.0)) return true;
  if (std::abs(num + k * k * den) < 1e-3) return true;
  return false;
}

TEST(Property, ProjectionGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(39);
  std::uniform_real_distribution<double> kd(0.1, 0.9);
  for (auto mode : {ProjectionMode::kFGH, ProjectionMode::kF, ProjectionMode::kFG}) {
    int tested = 0;
    while (tested < 30) {
      auto r = random_triplet(2, 2, 2, rng);
      r.gamma = 0.5 + 2.0 * (rng() % 1000) / 1000.0;
      double k = kd(rng);
      if (near_kink(r, k, mode)) continue;
      std::vector<Tensor> inputs = {r.f, r.G, r.h, r.beta, Tensor::scalar(r.gamma)};
      auto builder = [mode, k](Tape& t, std::vector<Var>& in) {
        return projection_loss(t, in, mode, k, false);
      };
      double err = testutil::check_gradients(builder, inputs);
      EXPECT_LT(err, 1e-4) << to_string(mode) << " trial " << tested;
      ++tested;
    }
  }
}

TEST(StopGradient, BlocksCorrectionTermsOnly) {
  RawTriplet r;
  r.f = Tensor::vector({2.0});
  r.G = Tensor::matrix(1, 1, {1.0});
  r.h = Tensor::vector({1.0});
  r.beta = Tensor::vector({1.0});
  r.gamma = 1.0;

  auto grad_f = [&](bool stop) {
    Tape t;
    Var f = t.leaf(r.f);
    Var G = t.leaf(r.G);
    Var h = t.leaf(r.h);
    auto m = project_fgh(t, f, G, h, t.constant(r.beta),
                         t.constant(Tensor::scalar(r.gamma)), 0.5, stop);
    Gradients g = t.backward(dot(t, t.constant(Tensor::vector({1.0})), m.f));
    return g.at(f)[0];
  };
  // Active ramp: with the correction blocked, f_m behaves as f_n minus a
  // constant; without blocking the subtraction cancels the direct path.
  EXPECT_DOUBLE_EQ(grad_f(true), 1.0);
  EXPECT_DOUBLE_EQ(grad_f(false), 0.0);

  // Interior s: the output scaling sqrt(s) keeps its gradient path through f
  // in both settings because only the subtractive corrections are blocked.
  r.f[0] = -0.5;
  auto grad_h_norm = [&](bool stop) {
    Tape t;
    Var f = t.leaf(r.f);
    Var G = t.leaf(r.G);
    Var h = t.leaf(r.h);
    auto m = project_fgh(t, f, G, h, t.constant(r.beta),
                         t.constant(Tensor::scalar(r.gamma)), 0.5, stop);
    Gradients g = t.backward(sqnorm(t, m.h));
    return g.at(f)[0];
  };
  // s = -v_f / v_gh = 0.5, |h_m|^2 = s, d/df = -beta / v_gh = -1.
  EXPECT_DOUBLE_EQ(grad_h_norm(true), -1.0);
  EXPECT_DOUBLE_EQ(grad_h_norm(false), -1.0);
}

TEST(ModifiedField, NominalFeasibleGivesNominalDrift) {
  auto dyn = NominalDynamics::make(1, 1, 1, {}, {}, {}, 1.0, GammaParam::fixed(1.0));
  (*dyn.f.biases[0])[0] = -1.0;
  (*dyn.g.biases[0])[0] = 0.2;
  (*dyn.h.biases[0])[0] = 0.1;
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  Tape t;
  DynamicsVars dv(t, dyn);
  auto [xdot, y] = modified_vector_field(t, dv, lyap, t.constant(Tensor::vector({1.0})),
                                         t.constant(Tensor::vector({0.0})),
                                         ProjectionMode::kFGH, 0.5, false);
  EXPECT_DOUBLE_EQ(xdot.tensor()[0], -1.0);
  EXPECT_DOUBLE_EQ(y.tensor()[0], 0.1);
}

TEST(ModifiedField, MatchesManualProjectionComposition) {
  std::mt19937_64 rng(40);
  auto dyn = NominalDynamics::make(2, 1, 1, {4}, {3}, {3}, 1.0, GammaParam::fixed(0.8));
  dyn.init(rng);
  auto lyap = LyapunovSpec::mixture({Tensor::vector({-1.0, 0.0}), Tensor::vector({1.0, 0.0})},
                                    1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor x = random_tensor({2}, rng, -2.0, 2.0);
    Tensor u = random_tensor({1}, rng, -1.0, 1.0);
    Tape t;
    t.recording = false;
    DynamicsVars dv(t, dyn);
    auto [xdot, y] =
        modified_vector_field(t, dv, lyap, t.constant(x), t.constant(u),
                              ProjectionMode::kFGH, 0.5, false);

    RawTriplet r;
    r.f = dyn.eval_f(x);
    r.G = dyn.eval_g(x);
    r.h = dyn.eval_h(x);
    r.beta = lyap.gradient(x);
    r.gamma = dyn.gamma.value();
    auto manual = project_raw(ProjectionMode::kFGH, r, 0.5);
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(xdot.tensor()[i], manual.f[i] + manual.G(i, 0) * u[0], 1e-12);
    }
    EXPECT_NEAR(y.tensor()[0], manual.h[0], 1e-12);
    EXPECT_LE(hj_value(manual.f, manual.G, manual.h, r.beta, r.gamma), 1e-9);
  }
}

TEST(ModifiedField, BistableValuesFeasibleAtLargeGamma) {
  RawTriplet r;
  double x = 0.5;
  r.f = Tensor::vector({x * (1.0 - x * x)});
  r.G = Tensor::matrix(1, 1, {1.0});
  r.h = Tensor::vector({x});
  r.beta = Tensor::vector({2.0 * (x - 1.0)});
  r.gamma = 100.0;
  auto out = project_raw(ProjectionMode::kFGH, r, 0.5);
  EXPECT_DOUBLE_EQ(out.f[0], r.f[0]);
  EXPECT_DOUBLE_EQ(out.G[0], r.G[0]);
  EXPECT_DOUBLE_EQ(out.h[0], r.h[0]);
  EXPECT_LE(hj_value(out.f, out.G, out.h, r.beta, r.gamma), 1e-9);
}

TEST(ProjectionArgs, Validation) {
  Tape t;
  Var f = t.constant(Tensor::vector({1.0}));
  Var G = t.constant(Tensor::matrix(1, 1, {1.0}));
  Var h = t.constant(Tensor::vector({1.0}));
  Var beta = t.constant(Tensor::vector({1.0}));
  EXPECT_THROW(project_fgh(t, f, G, h, beta, t.constant_scalar(-1.0), 0.5, false),
               std::invalid_argument);
  EXPECT_THROW(project_fgh(t, f, G, h, beta, t.constant_scalar(1.0), 1.5, false),
               std::invalid_argument);
  EXPECT_THROW(project_fgh(t, f, G, h, beta, t.constant_scalar(1.0), -0.1, false),
               std::invalid_argument);
  EXPECT_EQ(projection_mode_from("fgh"), ProjectionMode::kFGH);
  EXPECT_THROW(projection_mode_from("bogus"), std::invalid_argument);
}

}  // namespace
}  // namespace hjstab
