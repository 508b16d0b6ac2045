#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hjstab/config.hpp"
#include "hjstab/dataset.hpp"
#include "hjstab/dynamics.hpp"
#include "hjstab/projection.hpp"

namespace hjstab {

inline constexpr const char* kCheckpointFormat = "hjstab-model-v1";

// Everything needed to reconstruct the modified system (f_m, G_m, h_m):
// the nominal networks, the certificate, and the projection settings.
struct ModelBundle {
  NominalDynamics dyn;
  LyapunovSpec lyap;
  ProjectionMode mode = ProjectionMode::kFGH;
  double k = 0.5;
  bool stop_grad = false;
  std::optional<double> clip_bound = 10.0;
  std::optional<Tensor> x0;
};

namespace detail {

inline nlohmann::json mlp_to_json(const Mlp& mlp) {
  nlohmann::json j;
  j["hidden"] = mlp.spec.hidden;
  j["scale"] = mlp.spec.output_scale;
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& w : mlp.weights) weights.push_back(w->values());
  for (const auto& b : mlp.biases) biases.push_back(b->values());
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

inline void mlp_from_json(const nlohmann::json& j, Mlp& mlp, const std::string& name) {
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (static_cast<int>(weights.size()) != mlp.layer_count() ||
      static_cast<int>(biases.size()) != mlp.layer_count()) {
    throw ConfigError("checkpoint: layer count mismatch in network '" + name + "'");
  }
  for (int i = 0; i < mlp.layer_count(); ++i) {
    auto w = weights[i].get<std::vector<double>>();
    auto b = biases[i].get<std::vector<double>>();
    if (w.size() != mlp.weights[i]->size() || b.size() != mlp.biases[i]->size()) {
      throw ConfigError("checkpoint: parameter shape mismatch in network '" + name + "' layer " +
                        std::to_string(i));
    }
    mlp.weights[i]->values() = std::move(w);
    mlp.biases[i]->values() = std::move(b);
  }
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(ModelBundle& bundle) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["dims"] = {{"n", bundle.dyn.n}, {"m", bundle.dyn.m}, {"l", bundle.dyn.l}};
  j["networks"] = {{"f", detail::mlp_to_json(bundle.dyn.f)},
                   {"g", detail::mlp_to_json(bundle.dyn.g)},
                   {"h", detail::mlp_to_json(bundle.dyn.h)}};
  j["gamma"] = {{"trainable", bundle.dyn.gamma.trainable},
                {"theta", bundle.dyn.gamma.theta->value()}};
  nlohmann::json centers = nlohmann::json::array();
  for (const Tensor& c : bundle.lyap.centers) centers.push_back(c.values());
  j["lyapunov"] = {{"centers", std::move(centers)}, {"weight", bundle.lyap.weight}};
  j["projection"] = {{"mode", to_string(bundle.mode)},
                     {"k", bundle.k},
                     {"stop_grad", bundle.stop_grad}};
  j["rollout"] = nlohmann::json::object();
  if (bundle.clip_bound) {
    j["rollout"]["clip_bound"] = *bundle.clip_bound;
  } else {
    j["rollout"]["clip_bound"] = nullptr;
  }
  if (bundle.x0) {
    j["rollout"]["x0"] = bundle.x0->values();
  } else {
    j["rollout"]["x0"] = nullptr;
  }
  return j;
}

inline ModelBundle checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format").get<std::string>() != kCheckpointFormat) {
    throw ConfigError("checkpoint: unknown format (expected " + std::string(kCheckpointFormat) +
                      ")");
  }
  const auto& dims = j.at("dims");
  int n = dims.at("n").get<int>();
  int m = dims.at("m").get<int>();
  int l = dims.at("l").get<int>();
  if (n < 1 || m < 1 || l < 1) throw ConfigError("checkpoint: dimensions must be positive");

  const auto& nets = j.at("networks");
  const auto& gj = j.at("gamma");
  GammaParam gamma;
  gamma.trainable = gj.at("trainable").get<bool>();
  gamma.theta = std::make_shared<Tensor>(Tensor::scalar(gj.at("theta").get<double>()));

  ModelBundle bundle;
  bundle.dyn = NominalDynamics::make(
      n, m, l, nets.at("f").at("hidden").get<std::vector<int>>(),
      nets.at("g").at("hidden").get<std::vector<int>>(),
      nets.at("h").at("hidden").get<std::vector<int>>(),
      nets.at("f").at("scale").get<double>(), std::move(gamma));
  detail::mlp_from_json(nets.at("f"), bundle.dyn.f, "f");
  detail::mlp_from_json(nets.at("g"), bundle.dyn.g, "g");
  detail::mlp_from_json(nets.at("h"), bundle.dyn.h, "h");

  const auto& lj = j.at("lyapunov");
  std::vector<Tensor> centers;
  for (const auto& c : lj.at("centers")) {
    Tensor center = Tensor::vector(c.get<std::vector<double>>());
    if (static_cast<int>(center.size()) != n) {
      throw ConfigError("checkpoint: Lyapunov center dimension mismatch");
    }
    centers.push_back(std::move(center));
  }
  bundle.lyap = LyapunovSpec::mixture(std::move(centers), lj.at("weight").get<double>());

  const auto& pj = j.at("projection");
  bundle.mode = projection_mode_from(pj.at("mode").get<std::string>());
  bundle.k = pj.at("k").get<double>();
  bundle.stop_grad = pj.at("stop_grad").get<bool>();
  if (bundle.k < 0.0 || bundle.k > 1.0) throw ConfigError("checkpoint: k must lie in [0, 1]");

  const auto& rj = j.at("rollout");
  if (!rj.at("clip_bound").is_null()) {
    bundle.clip_bound = rj.at("clip_bound").get<double>();
  } else {
    bundle.clip_bound.reset();
  }
  if (!rj.at("x0").is_null()) {
    Tensor x0 = Tensor::vector(rj.at("x0").get<std::vector<double>>());
    if (static_cast<int>(x0.size()) != n) {
      throw ConfigError("checkpoint: stored x0 dimension mismatch");
    }
    bundle.x0 = std::move(x0);
  }
  return bundle;
}

inline void save_checkpoint(const std::string& path, ModelBundle& bundle) {
  detail::write_text_file(path, checkpoint_to_json(bundle).dump(2) + "\n");
}

inline ModelBundle load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint: failed to parse " + path + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint: malformed " + path + ": " + e.what());
  }
}

}  // namespace hjstab
