#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjstab/benchmarks.hpp"
#include "hjstab/checkpoint.hpp"
#include "hjstab/config.hpp"
#include "hjstab/csv.hpp"
#include "hjstab/dataset.hpp"
#include "hjstab/metrics.hpp"
#include "hjstab/simulation.hpp"
#include "hjstab/training.hpp"

namespace hjstab {

inline constexpr const char* kVersion = "0.1.0";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 0 success, 2 config error, 3 numeric failure, 4 IO error.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  return 3;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex_u64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string iso_utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

inline void write_manifest(const std::filesystem::path& out_dir, const RunManifest& man) {
  nlohmann::json j;
  j["command"] = man.command;
  j["argv"] = man.argv;
  j["config_hash"] = man.config_hash;
  j["seed"] = man.seed;
  j["version"] = man.version;
  j["started_at"] = man.started_at;
  j["finished_at"] = man.finished_at;
  j["outputs"] = man.outputs;
  detail::write_text_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

struct CommandArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string model_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::vector<std::string> argv;
};

namespace detail {

inline const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "run.seed",          "run.threads",
      "data.benchmark",    "data.n_sequences",  "data.horizon",     "data.dt",
      "data.x0",           "data.amp_lo",       "data.amp_hi",      "data.width_lo",
      "data.width_hi",     "data.steps",        "data.meals_lo",    "data.meals_hi",
      "data.onset_lo",     "data.onset_hi",     "data.mass_lo",     "data.mass_hi",
      "data.shape_lo",     "data.shape_hi",     "data.blood_volume",
      "model.state_dim",   "model.f_hidden",    "model.g_hidden",   "model.h_hidden",
      "model.f_scale",     "model.gamma",       "model.gamma_trainable",
      "lyapunov.centers",  "lyapunov.weight",
      "projection.mode",   "projection.k",      "projection.stop_grad",
      "train.optimizer",   "train.rate",        "train.weight_decay",
      "train.batch_size",  "train.iterations",  "train.lambda",     "train.alpha",
      "train.epsilon",     "train.hj_samples",  "train.hj_sigma",   "train.val_interval",
      "train.clip_bound",  "train.x0",
      "probe.magnitudes",  "probe.dt",          "probe.steps",
      "audit.samples",     "audit.sigma",       "audit.box"};
  return keys;
}

inline Config load_config(const std::string& path) {
  if (path.empty()) return Config();
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path);
  Config cfg = Config::parse(read_text_file(path));
  auto unknown = cfg.unknown_keys(known_config_keys());
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return cfg;
}

inline std::string config_hash(const std::string& path) {
  if (path.empty()) return "";
  return "fnv1a:" + hex_u64(fnv1a64(read_text_file(path)));
}

inline std::uint64_t effective_seed(const Config& cfg, const CommandArgs& args) {
  if (args.seed) return *args.seed;
  return cfg.get_u64("run.seed", 0);
}

inline std::filesystem::path prepare_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("missing required output directory");
  std::filesystem::path p(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) {
    throw IoError("cannot create output directory: " + out_dir);
  }
  return p;
}

inline Dataset load_dataset_checked(const std::string& data_dir) {
  if (data_dir.empty()) throw ConfigError("missing required data directory");
  std::filesystem::path p(data_dir);
  if (!std::filesystem::exists(p / "meta")) {
    throw IoError("dataset meta not found under: " + data_dir);
  }
  try {
    return load_dataset(p);
  } catch (const std::exception& e) {
    throw ConfigError("dataset: " + std::string(e.what()));
  }
}

inline RunManifest start_manifest(const std::string& command, const CommandArgs& args,
                                  std::uint64_t seed) {
  RunManifest man;
  man.command = command;
  man.argv = args.argv;
  man.config_hash = config_hash(args.config_path);
  man.seed = seed;
  man.started_at = iso_utc_now();
  return man;
}

}  // namespace detail

// Builds the untrained model bundle described by [model]/[lyapunov]/
// [projection]/[train]; input and output widths come from the dataset.
inline ModelBundle model_from_config(const Config& cfg, int input_dim, int output_dim) {
  long long n = cfg.get_int("model.state_dim");
  if (n < 1) throw ConfigError("config: model.state_dim must be >= 1");
  double gamma0 = cfg.get_double("model.gamma", 1.0);
  bool gamma_trainable = cfg.get_bool("model.gamma_trainable", true);
  GammaParam gamma =
      gamma_trainable ? GammaParam::trainable_init(gamma0) : GammaParam::fixed(gamma0);

  ModelBundle b;
  b.dyn = NominalDynamics::make(static_cast<int>(n), input_dim, output_dim,
                                cfg.get_ints("model.f_hidden", {}),
                                cfg.get_ints("model.g_hidden", {}),
                                cfg.get_ints("model.h_hidden", {}),
                                cfg.get_double("model.f_scale", 1.0), std::move(gamma));

  std::vector<Tensor> centers;
  if (cfg.has("lyapunov.centers")) {
    std::vector<double> flat = cfg.get_doubles("lyapunov.centers");
    if (flat.empty() || flat.size() % static_cast<std::size_t>(n) != 0) {
      throw ConfigError("config: lyapunov.centers must hold a multiple of state_dim values");
    }
    for (std::size_t at = 0; at < flat.size(); at += n) {
      centers.push_back(
          Tensor::vector(std::vector<double>(flat.begin() + at, flat.begin() + at + n)));
    }
  } else {
    centers.push_back(Tensor(std::vector<int>{static_cast<int>(n)}));
  }
  b.lyap = LyapunovSpec::mixture(std::move(centers), cfg.get_double("lyapunov.weight", 0.5));

  b.mode = projection_mode_from(cfg.get_string("projection.mode", "fgh"));
  b.k = cfg.get_double("projection.k", 0.5);
  b.stop_grad = cfg.get_bool("projection.stop_grad", false);
  if (b.k < 0.0 || b.k > 1.0) throw ConfigError("config: projection.k must lie in [0, 1]");

  if (cfg.get_string("train.clip_bound", "") == "none") {
    b.clip_bound.reset();
  } else {
    b.clip_bound = cfg.get_double("train.clip_bound", 10.0);
  }
  if (cfg.has("train.x0")) {
    Tensor x0 = Tensor::vector(cfg.get_doubles("train.x0"));
    if (static_cast<long long>(x0.size()) != n) {
      throw ConfigError("config: train.x0 must hold state_dim values");
    }
    b.x0 = std::move(x0);
  }
  return b;
}

inline TrainConfig train_config_from(const Config& cfg, const ModelBundle& bundle,
                                     std::uint64_t seed) {
  TrainConfig tc;
  tc.mode = bundle.mode;
  tc.k = bundle.k;
  tc.stop_grad = bundle.stop_grad;
  tc.clip_bound = bundle.clip_bound;
  tc.x0_override = bundle.x0;
  tc.lambda_hj = cfg.get_double("train.lambda", 0.0);
  tc.alpha_gamma = cfg.get_double("train.alpha", 0.0);
  tc.epsilon = cfg.get_double("train.epsilon", 0.0);
  tc.hj_sample_count = static_cast<int>(cfg.get_int("train.hj_samples", 64));
  tc.hj_sample_sigma = cfg.get_double("train.hj_sigma", 1.0);
  tc.optimizer.kind = optimizer_kind_from(cfg.get_string("train.optimizer", "adam"));
  tc.optimizer.rate = cfg.get_double("train.rate");
  tc.optimizer.weight_decay = cfg.get_double("train.weight_decay", 0.0);
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 100));
  tc.iterations = static_cast<int>(cfg.get_int("train.iterations"));
  tc.val_interval = static_cast<int>(cfg.get_int("train.val_interval", 25));
  tc.seed = seed;
  tc.validate();
  return tc;
}

// Rolls the modified system over a recorded input sequence.
inline Signal predict_sequence(const ModelBundle& b, const Signal& u, const Tensor& x0) {
  Tape t;
  t.recording = false;
  DynamicsVars dv(t, b.dyn);
  RolloutConfig rcfg{.dt = u.dt, .steps = u.steps, .clip_bound = b.clip_bound};
  auto field = [&](Tape& tp, const Var& x, const Var& uin) {
    return modified_vector_field(tp, dv, b.lyap, x, uin, b.mode, b.k, b.stop_grad);
  };
  Signal out = euler_rollout(t, x0, u, field, rcfg).outputs(u.dt);
  out.labels.resize(out.dim);
  for (int j = 0; j < out.dim; ++j) out.labels[j] = "yhat" + std::to_string(j);
  return out;
}

inline void cmd_generate(const CommandArgs& args) {
  Config cfg = detail::load_config(args.config_path);
  std::uint64_t seed = detail::effective_seed(cfg, args);
  auto out = detail::prepare_out_dir(args.out_dir);
  RunManifest man = detail::start_manifest("generate", args, seed);

  std::string benchmark = cfg.get_string("data.benchmark");
  Dataset ds;
  if (benchmark == "bistable") {
    BistableGenConfig g;
    g.n_sequences = static_cast<int>(cfg.get_int("data.n_sequences", g.n_sequences));
    g.horizon = cfg.get_double("data.horizon", g.horizon);
    g.dt = cfg.get_double("data.dt", g.dt);
    g.x0 = cfg.get_double("data.x0", g.x0);
    g.amp_lo = cfg.get_double("data.amp_lo", g.amp_lo);
    g.amp_hi = cfg.get_double("data.amp_hi", g.amp_hi);
    g.width_lo = cfg.get_double("data.width_lo", g.width_lo);
    g.width_hi = cfg.get_double("data.width_hi", g.width_hi);
    g.seed = seed;
    ds = gen_bistable(g);
  } else if (benchmark == "glucose") {
    GlucoseGenConfig g;
    g.n_sequences = static_cast<int>(cfg.get_int("data.n_sequences", g.n_sequences));
    g.steps = static_cast<int>(cfg.get_int("data.steps", g.steps));
    g.dt = cfg.get_double("data.dt", g.dt);
    g.meals.meals_lo = static_cast<int>(cfg.get_int("data.meals_lo", g.meals.meals_lo));
    g.meals.meals_hi = static_cast<int>(cfg.get_int("data.meals_hi", g.meals.meals_hi));
    g.meals.onset_lo = cfg.get_double("data.onset_lo", g.meals.onset_lo);
    g.meals.onset_hi = cfg.get_double("data.onset_hi", g.meals.onset_hi);
    g.meals.mass_lo = cfg.get_double("data.mass_lo", g.meals.mass_lo);
    g.meals.mass_hi = cfg.get_double("data.mass_hi", g.meals.mass_hi);
    g.meals.shape_lo = cfg.get_double("data.shape_lo", g.meals.shape_lo);
    g.meals.shape_hi = cfg.get_double("data.shape_hi", g.meals.shape_hi);
    g.meals.blood_volume = cfg.get_double("data.blood_volume", g.meals.blood_volume);
    g.seed = seed;
    ds = gen_glucose_dataset(g);
  } else {
    throw ConfigError("config: unknown benchmark '" + benchmark + "' (bistable|glucose)");
  }
  save_dataset(out, ds);
  man.outputs = {"meta"};
  man.finished_at = iso_utc_now();
  write_manifest(out, man);
}

inline void cmd_train(const CommandArgs& args) {
  if (args.config_path.empty()) throw ConfigError("train: --config is required");
  Config cfg = detail::load_config(args.config_path);
  std::uint64_t seed = detail::effective_seed(cfg, args);
  auto out = detail::prepare_out_dir(args.out_dir);
  RunManifest man = detail::start_manifest("train", args, seed);

  Dataset ds = detail::load_dataset_checked(args.data_dir);
  ModelBundle bundle = model_from_config(cfg, ds.input_dim(), ds.output_dim());
  std::mt19937_64 init_rng(splitmix64(seed));
  bundle.dyn.init(init_rng);
  TrainConfig tc = train_config_from(cfg, bundle, seed);

  TrainResult res = train(ds, bundle.dyn, bundle.lyap, tc);

  save_checkpoint((out / "checkpoint.json").string(), bundle);
  detail::write_text_file(out / "loss_trace.csv", trace_to_csv(res.trace));
  man.outputs = {"checkpoint.json", "loss_trace.csv"};
  man.finished_at = iso_utc_now();
  write_manifest(out, man);
}

inline ModelBundle load_bundle_checked(const std::string& model_path) {
  if (model_path.empty()) throw ConfigError("missing required model checkpoint path");
  if (!std::filesystem::exists(model_path)) {
    throw IoError("checkpoint not found: " + model_path);
  }
  return load_checkpoint(model_path);
}

inline std::string eval_report_json(const EvalReport& rep, int n_test) {
  nlohmann::json j;
  j["rmse"] = rep.rmse;
  j["gain_io_pred"] = rep.gain_io_pred;
  j["gain_io_data"] = rep.gain_io_data;
  j["gain_io_error"] = rep.gain_io_error;
  j["gain_sequences_used"] = rep.gain_sequences_used;
  j["gain_sequences_excluded"] = rep.gain_sequences_excluded;
  j["n_test"] = n_test;
  return j.dump(2) + "\n";
}

inline std::string per_sequence_csv(const EvalReport& rep) {
  std::string out = "index,error_l2,input_l2,data_output_l2,pred_output_l2\n";
  for (const SequenceMetrics& m : rep.per_sequence) {
    out += std::to_string(m.index) + "," + format_double(m.error_l2) + "," +
           format_double(m.input_l2) + "," + format_double(m.data_output_l2) + "," +
           format_double(m.pred_output_l2) + "\n";
  }
  return out;
}

inline EvalReport cmd_eval(const CommandArgs& args) {
  ModelBundle bundle = load_bundle_checked(args.model_path);
  Dataset ds = detail::load_dataset_checked(args.data_dir);
  auto out = detail::prepare_out_dir(args.out_dir);
  RunManifest man = detail::start_manifest("eval", args, 0);

  TrainConfig x0cfg;
  x0cfg.x0_override = bundle.x0;
  std::vector<Signal> u, y, yhat;
  for (int id : ds.test_indices()) {
    const Sequence& seq = ds.sequences.at(id);
    Tensor x0 = resolve_x0(seq, bundle.dyn.n, x0cfg);
    u.push_back(seq.u);
    y.push_back(seq.y);
    yhat.push_back(predict_sequence(bundle, seq.u, x0));
  }
  if (u.empty()) throw ConfigError("eval: dataset has no test split");
  EvalReport rep = evaluate_predictions(u, y, yhat);

  detail::write_text_file(out / "report.json", eval_report_json(rep, static_cast<int>(u.size())));
  detail::write_text_file(out / "per_sequence.csv", per_sequence_csv(rep));
  man.outputs = {"report.json", "per_sequence.csv"};
  man.finished_at = iso_utc_now();
  write_manifest(out, man);
  return rep;
}

inline std::string verdicts_csv(const std::vector<BoundednessVerdict>& verdicts) {
  std::string out = "magnitude,max_abs_output,bounded,divergence_step\n";
  for (const BoundednessVerdict& v : verdicts) {
    out += format_double(v.magnitude) + "," + format_double(v.max_abs_output) + "," +
           (v.bounded ? "true" : "false") + ",";
    if (v.divergence_step >= 0) out += std::to_string(v.divergence_step);
    out += "\n";
  }
  return out;
}

inline std::vector<BoundednessVerdict> cmd_probe(const CommandArgs& args) {
  ModelBundle bundle = load_bundle_checked(args.model_path);
  Config cfg = detail::load_config(args.config_path);
  auto out = detail::prepare_out_dir(args.out_dir);
  RunManifest man = detail::start_manifest("probe", args, 0);

  std::vector<double> magnitudes;
  if (cfg.has("probe.magnitudes")) {
    magnitudes = cfg.get_doubles("probe.magnitudes");
  } else {
    for (int mag = 2; mag <= 10; ++mag) magnitudes.push_back(mag);
  }
  double dt = cfg.get_double("probe.dt", 0.01);
  int steps = static_cast<int>(cfg.get_int("probe.steps", 10000));
  Tensor x0 = bundle.x0 ? *bundle.x0 : Tensor(std::vector<int>{bundle.dyn.n});

  auto field = [&](Tape& tp, const Var& x, const Var& uin) {
    DynamicsVars dv(tp, bundle.dyn);
    return modified_vector_field(tp, dv, bundle.lyap, x, uin, bundle.mode, bundle.k,
                                 bundle.stop_grad);
  };
  std::vector<StepProbeResult> probes =
      step_response_probe(field, x0, bundle.dyn.m, magnitudes, dt, steps);

  std::vector<BoundednessVerdict> verdicts;
  for (const StepProbeResult& p : probes) {
    std::string name = "step_mag_" + format_double(p.magnitude) + ".csv";
    std::ostringstream csv;
    p.output.to_csv(csv);
    detail::write_text_file(out / name, csv.str());
    man.outputs.push_back(name);
    BoundednessVerdict v;
    v.magnitude = p.magnitude;
    v.max_abs_output = p.max_abs_output;
    v.bounded = !p.divergence_step.has_value();
    v.divergence_step = p.divergence_step.value_or(-1);
    verdicts.push_back(v);
  }
  detail::write_text_file(out / "verdicts.csv", verdicts_csv(verdicts));
  man.outputs.push_back("verdicts.csv");
  man.finished_at = iso_utc_now();
  write_manifest(out, man);
  return verdicts;
}

struct HjAuditResult {
  int samples = 0;
  double max_hj_modified = -std::numeric_limits<double>::infinity();
  double max_hj_nominal = -std::numeric_limits<double>::infinity();
  double feasible_fraction = 0.0;
};

inline HjAuditResult cmd_hj_audit(const CommandArgs& args) {
  ModelBundle bundle = load_bundle_checked(args.model_path);
  Config cfg = detail::load_config(args.config_path);
  std::uint64_t seed = detail::effective_seed(cfg, args);
  auto out = detail::prepare_out_dir(args.out_dir);
  RunManifest man = detail::start_manifest("hj-audit", args, seed);

  int samples = static_cast<int>(cfg.get_int("audit.samples", 10000));
  double sigma = cfg.get_double("audit.sigma", 1.0);
  double box = cfg.get_double("audit.box", 5.0);
  if (samples < 1) throw ConfigError("config: audit.samples must be >= 1");
  if (!(sigma > 0.0) || !(box > 0.0)) {
    throw ConfigError("config: audit.sigma and audit.box must be positive");
  }

  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, sigma);
  std::uniform_real_distribution<double> cube(-box, box);
  std::uniform_int_distribution<std::size_t> pick(0, bundle.lyap.centers.size() - 1);

  HjAuditResult res;
  res.samples = samples;
  int feasible = 0;
  for (int i = 0; i < samples; ++i) {
    Tensor x(std::vector<int>{bundle.dyn.n});
    if (i % 2 == 0) {
      const Tensor& c = bundle.lyap.centers[pick(rng)];
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = c[j] + gauss(rng);
    } else {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = cube(rng);
    }
    TripletValues tv = eval_modified(bundle.dyn, bundle.lyap, x, bundle.mode, bundle.k,
                                     bundle.stop_grad);
    res.max_hj_modified = std::max(res.max_hj_modified, tv.hj_modified);
    res.max_hj_nominal = std::max(res.max_hj_nominal, tv.hj_nominal);
    if (tv.hj_modified <= 1e-9) ++feasible;
  }
  res.feasible_fraction = static_cast<double>(feasible) / samples;

  nlohmann::json j;
  j["samples"] = res.samples;
  j["sigma"] = sigma;
  j["box"] = box;
  j["mode"] = to_string(bundle.mode);
  j["k"] = bundle.k;
  j["gamma"] = bundle.dyn.gamma.value();
  j["max_hj_modified"] = res.max_hj_modified;
  j["max_hj_nominal"] = res.max_hj_nominal;
  j["feasible_fraction"] = res.feasible_fraction;
  detail::write_text_file(out / "hj_audit.json", j.dump(2) + "\n");
  man.outputs = {"hj_audit.json"};
  man.finished_at = iso_utc_now();
  write_manifest(out, man);
  return res;
}

}  // namespace hjstab
