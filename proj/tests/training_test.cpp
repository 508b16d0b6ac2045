#include "hjstab/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hjstab/benchmarks.hpp"
#include "test_util.hpp"

namespace hjstab {
namespace {

std::shared_ptr<Tensor> param_scalar(double v) {
  return std::make_shared<Tensor>(Tensor::vector({v}));
}

TEST(Optimizers, SgdZeroGradientLeavesParamsUnchanged) {
  auto p = param_scalar(1.5);
  Optimizer opt({OptimizerKind::kSgd, 0.1, 0.0}, {p});
  opt.step({Tensor::vector({0.0})});
  EXPECT_DOUBLE_EQ((*p)[0], 1.5);
}

TEST(Optimizers, SgdAppliesRateAndCoupledDecay) {
  auto p = param_scalar(1.0);
  Optimizer opt({OptimizerKind::kSgd, 0.1, 0.5}, {p});
  opt.step({Tensor::vector({0.5})});
  EXPECT_DOUBLE_EQ((*p)[0], 1.0 - 0.1 * (0.5 + 0.5 * 1.0));
}

TEST(Optimizers, AdamFirstStepIsBiasCorrected) {
  auto p = param_scalar(1.0);
  Optimizer opt({OptimizerKind::kAdam, 0.1, 0.0}, {p});
  opt.step({Tensor::vector({1.0})});
  EXPECT_NEAR((*p)[0], 0.9, 1e-6);
}

TEST(Optimizers, AdamWDecouplesWeightDecay) {
  auto p = param_scalar(1.0);
  Optimizer opt({OptimizerKind::kAdamW, 0.1, 0.1}, {p});
  opt.step({Tensor::vector({0.0})});
  EXPECT_DOUBLE_EQ((*p)[0], 0.99);

  auto q = param_scalar(1.0);
  Optimizer coupled({OptimizerKind::kAdam, 0.1, 0.1}, {q});
  coupled.step({Tensor::vector({0.0})});
  EXPECT_NEAR((*q)[0], 0.9, 1e-5);
}

TEST(Optimizers, RmsPropNormalizesFirstStep) {
  auto p = param_scalar(1.0);
  Optimizer opt({OptimizerKind::kRmsProp, 0.1, 0.0}, {p});
  opt.step({Tensor::vector({1.0})});
  EXPECT_NEAR((*p)[0], 0.0, 1e-6);
}

TEST(Optimizers, RejectsBadInput) {
  auto p = param_scalar(1.0);
  EXPECT_THROW(Optimizer({OptimizerKind::kSgd, 0.0, 0.0}, {p}), std::invalid_argument);
  Optimizer opt({OptimizerKind::kSgd, 0.1, 0.0}, {p});
  EXPECT_THROW(opt.step({}), std::invalid_argument);
  EXPECT_THROW(opt.step({Tensor::vector({1.0, 2.0})}), std::invalid_argument);
  EXPECT_EQ(optimizer_kind_from("rmsprop"), OptimizerKind::kRmsProp);
  EXPECT_THROW(optimizer_kind_from("lbfgs"), std::invalid_argument);
}

TEST(HjSampler, MixesAllMeansAndIsSeedDeterministic) {
  TrainConfig cfg;
  cfg.hj_sample_count = 4000;
  cfg.hj_sample_sigma = 0.3;
  auto lyap = LyapunovSpec::mixture({Tensor::vector({-1.0}), Tensor::vector({1.0})}, 1.0);
  std::mt19937_64 rng_a(3), rng_b(3);
  auto a = draw_hj_samples(cfg, lyap, 1, rng_a);
  auto b = draw_hj_samples(cfg, lyap, 1, rng_b);
  ASSERT_EQ(a.size(), 4000u);
  int near_low = 0, near_high = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].values(), b[i].values());
    if (a[i][0] < 0.0) ++near_low;
    if (a[i][0] > 0.0) ++near_high;
  }
  EXPECT_GT(near_low, 1200);
  EXPECT_GT(near_high, 1200);

  TrainConfig bad = cfg;
  bad.hj_sample_means = {Tensor::vector({0.0, 0.0})};
  EXPECT_THROW(draw_hj_samples(bad, lyap, 1, rng_a), std::invalid_argument);
}

NominalDynamics linear_scalar_model(double f_weight, double g_bias, double h_weight,
                                    double gamma = 1.0) {
  auto dyn = NominalDynamics::make(1, 1, 1, {}, {}, {}, 1.0, GammaParam::fixed(gamma));
  (*dyn.f.weights[0])(0, 0) = f_weight;
  (*dyn.g.biases[0])[0] = g_bias;
  (*dyn.h.weights[0])(0, 0) = h_weight;
  return dyn;
}

TEST(HjPenalty, ZeroTripletWithZeroMarginIsZero) {
  auto dyn = linear_scalar_model(0.0, 0.0, 0.0);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.epsilon = 0.0;
  std::mt19937_64 rng(1);
  EXPECT_DOUBLE_EQ(l_hj_penalty(dyn, lyap, cfg, rng), 0.0);
}

TEST(HjPenalty, StableLinearDriftIsZeroAndMarginIsExact) {
  auto dyn = linear_scalar_model(-1.0, 0.0, 0.0);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.epsilon = 0.0;
  std::mt19937_64 rng(2);
  EXPECT_DOUBLE_EQ(l_hj_penalty(dyn, lyap, cfg, rng), 0.0);

  auto zero = linear_scalar_model(0.0, 0.0, 0.0);
  cfg.epsilon = 0.5;
  EXPECT_DOUBLE_EQ(l_hj_penalty(zero, lyap, cfg, rng), 0.5);

  auto unstable = linear_scalar_model(1.0, 0.0, 0.0);
  cfg.epsilon = 0.0;
  EXPECT_GT(l_hj_penalty(unstable, lyap, cfg, rng), 0.1);
}

TEST(HjPenalty, AlwaysNonNegative) {
  std::mt19937_64 rng(4);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0, 0.0}), 0.5);
  TrainConfig cfg;
  cfg.hj_sample_count = 16;
  for (int trial = 0; trial < 20; ++trial) {
    auto dyn = NominalDynamics::make(2, 1, 1, {5}, {4}, {4}, 1.0, GammaParam::fixed(0.7));
    dyn.init(rng);
    EXPECT_GE(l_hj_penalty(dyn, lyap, cfg, rng), 0.0);
  }
}

TEST(GammaTerm, GradientMatchesTwoAlphaGamma) {
  double alpha = 0.01;
  for (double theta0 : {-2.0, 0.0, 1.5}) {
    auto dyn = NominalDynamics::make(1, 1, 1, {}, {}, {}, 1.0, GammaParam::trainable_init(1.0));
    (*dyn.gamma.theta)[0] = theta0;
    Tape t;
    DynamicsVars dv(t, dyn);
    Var gamma = dv.gamma(t);
    Var loss = scale_const(t, mul(t, gamma, gamma), alpha);
    Gradients g = t.backward(loss);
    double sigmoid = 1.0 / (1.0 + std::exp(-theta0));
    double expected = 2.0 * alpha * gamma.scalar() * sigmoid;
    EXPECT_NEAR(g.at(dv.theta)[0], expected, 1e-12);
    EXPECT_GE(g.at(dv.theta)[0], 0.0);
  }
}

Dataset tiny_linear_dataset(int n_sequences, int steps, double dt, std::uint64_t seed) {
  Dataset ds;
  ds.benchmark = "toy";
  ds.seed = seed;
  ds.dt = dt;
  for (int i = 0; i < n_sequences; ++i) {
    std::mt19937_64 rng(splitmix64(seed + i));
    Sequence s;
    s.u = Signal::make(dt, steps, 1);
    int on = std::uniform_int_distribution<int>(0, steps / 2)(rng);
    int off = on + std::uniform_int_distribution<int>(1, steps / 2)(rng);
    double amp = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    for (int t = 0; t < steps; ++t) {
      if (t >= on && t < off) s.u.at(t, 0) = amp;
    }
    s.y = Signal::make(dt, steps, 1);
    double x = 0.0;
    for (int t = 0; t < steps; ++t) {
      s.y.at(t, 0) = x;
      x += dt * (-0.5 * x + s.u.at(t, 0));
    }
    s.x0 = Tensor::vector({0.0});
    ds.sequences.push_back(std::move(s));
  }
  ds.split = make_splits(n_sequences);
  return ds;
}

TEST(PredictionLoss, PerfectAndOffsetClosedForms) {
  auto dyn = linear_scalar_model(0.0, 0.0, 0.0);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;

  Dataset ds = tiny_linear_dataset(3, 15, 0.1, 7);
  for (Sequence& s : ds.sequences) {
    for (double& v : s.y.values) v = 0.0;
  }
  std::vector<int> all = {0, 1, 2};
  EXPECT_DOUBLE_EQ(prediction_loss(ds, all, dyn, lyap, cfg), 0.0);

  double delta = 0.3;
  for (Sequence& s : ds.sequences) {
    for (double& v : s.y.values) v = delta;
  }
  EXPECT_NEAR(prediction_loss(ds, all, dyn, lyap, cfg), delta * delta * 15 * 0.1, 1e-12);
}

TEST(PredictionLoss, MatchesStraightLineRecomputation) {
  std::mt19937_64 rng(9);
  auto dyn = NominalDynamics::make(2, 1, 1, {6}, {5}, {4}, 0.5, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0, 0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.x0_override = Tensor::vector({0.1, -0.2});

  Dataset ds = tiny_linear_dataset(3, 12, 0.1, 11);
  std::vector<int> all = {0, 1, 2};
  double fast = prediction_loss(ds, all, dyn, lyap, cfg);

  double manual = 0.0;
  for (int id = 0; id < 3; ++id) {
    const Sequence& seq = ds.sequences[id];
    Tensor x = *cfg.x0_override;
    double acc = 0.0;
    for (int t = 0; t < seq.u.steps; ++t) {
      Tensor yhat = dyn.eval_h(x);
      double e = yhat[0] - seq.y.at(t, 0);
      acc += e * e;
      Tensor f = dyn.eval_f(x);
      Tensor G = dyn.eval_g(x);
      for (int i = 0; i < 2; ++i) {
        x[i] += 0.1 * (f[i] + G(i, 0) * seq.u.at(t, 0));
        x[i] = std::clamp(x[i], -10.0, 10.0);
      }
    }
    manual += acc * 0.1;
  }
  manual /= 3.0;
  EXPECT_NEAR(fast, manual, 1e-12);
}

TEST(TotalLoss, ReducesToPredictionWhenWeightsVanish) {
  auto dyn = linear_scalar_model(-0.3, 0.5, 1.0);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  Dataset ds = tiny_linear_dataset(3, 10, 0.1, 13);
  std::vector<int> all = {0, 1, 2};
  std::mt19937_64 rng(1);
  EXPECT_DOUBLE_EQ(total_loss(ds, all, dyn, lyap, cfg, rng),
                   prediction_loss(ds, all, dyn, lyap, cfg));

  TrainConfig weighted = cfg;
  weighted.lambda_hj = 0.01;
  weighted.alpha_gamma = 0.01;
  std::mt19937_64 rng_a(2), rng_b(2);
  double expected = prediction_loss(ds, all, dyn, lyap, cfg) +
                    0.01 * l_hj_penalty(dyn, lyap, weighted, rng_a) +
                    0.01 * dyn.gamma.value() * dyn.gamma.value();
  EXPECT_DOUBLE_EQ(total_loss(ds, all, dyn, lyap, weighted, rng_b), expected);
}

TEST(Train, ZeroIterationsLeaveModelUntouched) {
  std::mt19937_64 rng(21);
  auto dyn = NominalDynamics::make(1, 1, 1, {4}, {3}, {3}, 1.0, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto before = dyn.parameter_snapshot();
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.iterations = 0;
  Dataset ds = tiny_linear_dataset(5, 10, 0.1, 17);
  TrainResult res = train(ds, dyn, lyap, cfg);
  EXPECT_TRUE(res.trace.empty());
  auto after = dyn.parameter_snapshot();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].values(), after[i].values());
}

TEST(Train, LinearToyLossDecreasesOverSmoothedWindow) {
  std::mt19937_64 rng(23);
  auto dyn = NominalDynamics::make(1, 1, 1, {8}, {4}, {4}, 0.1, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.iterations = 80;
  cfg.batch_size = 16;
  cfg.seed = 5;
  cfg.optimizer = {OptimizerKind::kAdam, 1e-2, 0.0};
  Dataset ds = tiny_linear_dataset(24, 20, 0.1, 19);
  TrainResult res = train(ds, dyn, lyap, cfg);
  ASSERT_EQ(res.trace.size(), 80u);
  auto window_mean = [&](int lo, int hi) {
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) acc += res.trace[i].total;
    return acc / (hi - lo);
  };
  double early = window_mean(0, 15);
  double late = window_mean(65, 80);
  EXPECT_LT(late, early * 0.8);
  EXPECT_GE(res.best_iteration, 0);
  EXPECT_LT(res.best_val_loss, std::numeric_limits<double>::infinity());
}

TEST(Train, RestoredModelReproducesBestValidationLoss) {
  std::mt19937_64 rng(29);
  auto dyn = NominalDynamics::make(1, 1, 1, {6}, {3}, {3}, 0.1, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.iterations = 30;
  cfg.batch_size = 8;
  cfg.val_interval = 5;
  cfg.optimizer = {OptimizerKind::kRmsProp, 5e-3, 0.0};
  Dataset ds = tiny_linear_dataset(16, 15, 0.1, 31);
  TrainResult res = train(ds, dyn, lyap, cfg);
  double reproduced = prediction_loss(ds, ds.val_indices(), dyn, lyap, cfg);
  EXPECT_DOUBLE_EQ(reproduced, res.best_val_loss);
}

TEST(Train, SeedDeterminismIsBitwise) {
  auto lyap = LyapunovSpec::mixture({Tensor::vector({-1.0}), Tensor::vector({1.0})}, 1.0);
  Dataset ds = tiny_linear_dataset(12, 12, 0.1, 37);
  auto run = [&]() {
    std::mt19937_64 rng(41);
    auto dyn = NominalDynamics::make(1, 1, 1, {5}, {3}, {3}, 0.1,
                                     GammaParam::trainable_init(1.0));
    dyn.init(rng);
    TrainConfig cfg;
    cfg.mode = ProjectionMode::kFGH;
    cfg.lambda_hj = 0.01;
    cfg.alpha_gamma = 0.01;
    cfg.epsilon = 0.1;
    cfg.hj_sample_count = 8;
    cfg.iterations = 12;
    cfg.batch_size = 6;
    cfg.seed = 43;
    cfg.optimizer = {OptimizerKind::kRmsProp, 1e-3, 1e-8};
    TrainResult res = train(ds, dyn, lyap, cfg);
    return std::make_pair(trace_to_csv(res.trace), dyn.parameter_snapshot());
  };
  auto [trace_a, params_a] = run();
  auto [trace_b, params_b] = run();
  EXPECT_EQ(trace_a, trace_b);
  ASSERT_EQ(params_a.size(), params_b.size());
  for (std::size_t i = 0; i < params_a.size(); ++i) {
    EXPECT_EQ(params_a[i].values(), params_b[i].values());
  }
}

TEST(Train, ProjectedRunsPassFeasibilitySpotChecks) {
  std::mt19937_64 rng(47);
  auto dyn = NominalDynamics::make(1, 1, 1, {6}, {4}, {4}, 0.1, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::mixture({Tensor::vector({-1.0}), Tensor::vector({1.0})}, 1.0);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kFGH;
  cfg.lambda_hj = 0.01;
  cfg.epsilon = 0.1;
  cfg.hj_sample_count = 8;
  cfg.iterations = 10;
  cfg.batch_size = 6;
  cfg.val_interval = 5;
  cfg.optimizer = {OptimizerKind::kRmsProp, 1e-3, 0.0};
  Dataset ds = tiny_linear_dataset(12, 12, 0.1, 53);
  TrainResult res = train(ds, dyn, lyap, cfg);
  EXPECT_GE(res.feasibility_checks, 1);
  EXPECT_LE(res.feasibility_worst_hj, 1e-9);
}

TEST(Train, MismatchedInitialStateNeedsOverride) {
  std::mt19937_64 rng(59);
  auto dyn = NominalDynamics::make(2, 1, 1, {4}, {3}, {3}, 1.0, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0, 0.0}), 0.5);
  Dataset ds = tiny_linear_dataset(5, 8, 0.1, 61);  // x0 is 1-dimensional
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.iterations = 1;
  cfg.batch_size = 2;
  EXPECT_THROW(train(ds, dyn, lyap, cfg), std::invalid_argument);
  cfg.x0_override = Tensor::vector({0.0, 0.0});
  EXPECT_NO_THROW(train(ds, dyn, lyap, cfg));
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  std::mt19937_64 rng(67);
  auto dyn = NominalDynamics::make(1, 1, 1, {4}, {3}, {3}, 1.0, GammaParam::fixed(1.0));
  dyn.init(rng);
  auto lyap = LyapunovSpec::quadratic(Tensor::vector({0.0}), 0.5);
  TrainConfig cfg;
  cfg.mode = ProjectionMode::kNone;
  cfg.iterations = 50;
  cfg.batch_size = 4;
  cfg.optimizer = {OptimizerKind::kSgd, 1e30, 0.0};
  Dataset ds = tiny_linear_dataset(8, 10, 0.1, 71);
  try {
    train(ds, dyn, lyap, cfg);
    FAIL() << "expected abort";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(TraceCsv, HeaderAndRowFormat) {
  std::vector<TraceRow> trace = {{0, 0.5, 0.25, 1.5, 0.75}};
  std::string csv = trace_to_csv(trace);
  EXPECT_EQ(csv, "iter,pred_loss,hj_loss,gamma,total\n0,0.5,0.25,1.5,0.75\n");
}

}  // namespace
}  // namespace hjstab
