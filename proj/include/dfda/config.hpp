#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfda/data.hpp"

namespace dfda {

enum class CriticKind { w2, kl, w1, kmeans, discriminator, none };

inline CriticKind critic_from_string(const std::string& s) {
  if (s == "w2") return CriticKind::w2;
  if (s == "kl") return CriticKind::kl;
  if (s == "w1") return CriticKind::w1;
  if (s == "kmeans") return CriticKind::kmeans;
  if (s == "discriminator") return CriticKind::discriminator;
  if (s == "none") return CriticKind::none;
  throw std::invalid_argument("config: unknown critic '" + s + "'");
}

inline std::string critic_to_string(CriticKind k) {
  switch (k) {
    case CriticKind::w2: return "w2";
    case CriticKind::kl: return "kl";
    case CriticKind::w1: return "w1";
    case CriticKind::kmeans: return "kmeans";
    case CriticKind::discriminator: return "discriminator";
    case CriticKind::none: return "none";
  }
  return "w2";
}

enum class GrlSchedule { constant, ramp };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t d = 16;
  std::size_t C = 8;
  std::size_t n_per_domain = 2000;
  data::ShiftSpec shift;  // default shift per ShiftSpec defaults
  std::size_t batch_size = 64;
  std::size_t epochs = 25;
  double max_lr = 1e-3;
  double lambda = 1.0;
  double alpha1 = 0.5;
  double alpha2 = 0.5;
  double beta = 1.0;
  double tau = 0.5;
  double sigma_floor = 1e-4;
  CriticKind critic = CriticKind::w2;
  double asl_gamma_pos = 0.0;
  double asl_gamma_neg = 4.0;
  double asl_margin = 0.05;
  GrlSchedule grl_schedule = GrlSchedule::constant;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j,
                           const std::vector<std::string>& known,
                           const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown field '" + scope + it.key() +
                                  "'");
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(
      j,
      {"seed", "d", "C", "n_per_domain", "shift", "batch_size", "epochs",
       "max_lr", "lambda", "alpha1", "alpha2", "beta", "tau", "sigma_floor",
       "critic", "asl", "grl_schedule"},
      "");
  ExperimentConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("d")) cfg.d = j.at("d").get<std::size_t>();
  if (j.contains("C")) cfg.C = j.at("C").get<std::size_t>();
  if (j.contains("n_per_domain"))
    cfg.n_per_domain = j.at("n_per_domain").get<std::size_t>();
  if (j.contains("batch_size"))
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("max_lr")) cfg.max_lr = j.at("max_lr").get<double>();
  if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
  if (j.contains("alpha1")) cfg.alpha1 = j.at("alpha1").get<double>();
  if (j.contains("alpha2")) cfg.alpha2 = j.at("alpha2").get<double>();
  if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
  if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
  if (j.contains("sigma_floor"))
    cfg.sigma_floor = j.at("sigma_floor").get<double>();
  if (j.contains("critic"))
    cfg.critic = critic_from_string(j.at("critic").get<std::string>());
  if (j.contains("grl_schedule")) {
    const std::string s = j.at("grl_schedule").get<std::string>();
    if (s == "constant")
      cfg.grl_schedule = GrlSchedule::constant;
    else if (s == "ramp")
      cfg.grl_schedule = GrlSchedule::ramp;
    else
      throw std::invalid_argument("config: unknown grl_schedule '" + s + "'");
  }
  if (j.contains("shift")) {
    const auto& s = j.at("shift");
    detail::reject_unknown(s,
                           {"rotation_angle", "translation", "scale",
                            "noise_sigma_source", "noise_sigma_target"},
                           "shift.");
    if (s.contains("rotation_angle"))
      cfg.shift.rotation_angle = s.at("rotation_angle").get<double>();
    if (s.contains("scale")) cfg.shift.scale = s.at("scale").get<double>();
    if (s.contains("noise_sigma_source"))
      cfg.shift.noise_sigma_source = s.at("noise_sigma_source").get<double>();
    if (s.contains("noise_sigma_target"))
      cfg.shift.noise_sigma_target = s.at("noise_sigma_target").get<double>();
    if (s.contains("translation")) {
      const auto& t = s.at("translation");
      if (t.is_number()) {
        cfg.shift.translation.assign(cfg.d, t.get<double>());
      } else {
        cfg.shift.translation = t.get<std::vector<double>>();
      }
    }
  } else {
    cfg.shift.translation.assign(cfg.d, 0.5);
  }
  if (j.contains("asl")) {
    const auto& a = j.at("asl");
    detail::reject_unknown(a, {"gamma_pos", "gamma_neg", "margin"}, "asl.");
    if (a.contains("gamma_pos"))
      cfg.asl_gamma_pos = a.at("gamma_pos").get<double>();
    if (a.contains("gamma_neg"))
      cfg.asl_gamma_neg = a.at("gamma_neg").get<double>();
    if (a.contains("margin")) cfg.asl_margin = a.at("margin").get<double>();
  }
  if (cfg.lambda < 0.0 || cfg.alpha1 < 0.0 || cfg.alpha2 < 0.0)
    throw std::invalid_argument("config: field 'lambda'/'alpha' must be >= 0");
  if (cfg.epochs < 1) throw std::invalid_argument("config: field 'epochs' < 1");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Default experiment: a low-dimensional pair whose covariate shift is large
/// enough that the no-adaptation arm degrades clearly on the target domain.
inline ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.d = 4;
  cfg.n_per_domain = 1000;
  cfg.lambda = 0.5;
  cfg.shift.rotation_angle = 1.3;
  cfg.shift.scale = 1.0;
  cfg.shift.noise_sigma_target = 0.1;
  cfg.shift.translation.assign(cfg.d, 0.7);
  return cfg;
}

}  // namespace dfda
