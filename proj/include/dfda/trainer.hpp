#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dfda/autodiff.hpp"
#include "dfda/config.hpp"
#include "dfda/critic.hpp"
#include "dfda/data.hpp"
#include "dfda/deepem.hpp"
#include "dfda/gmm.hpp"
#include "dfda/metrics.hpp"
#include "dfda/nn.hpp"

namespace dfda::trainer {

/// Feature extractor + classifier head + DeepEM E-block, plus the optional
/// DANN-style discriminator for the baseline critic.
struct Model {
  nn::Mlp f_g;  // d -> 64 -> 32, relu
  nn::Mlp f_c;  // 32 -> C, linear; sigmoid applied at call sites
  deepem::EBlock e_block;
  critic::Discriminator discriminator;
  bool has_discriminator = false;

  static Model create(const ExperimentConfig& cfg) {
    Model m;
    m.f_g = nn::init_params({cfg.d, 64, 32}, cfg.seed * 4 + 1,
                            nn::Activation::relu, nn::Activation::relu);
    m.f_c = nn::init_params({32, cfg.C}, cfg.seed * 4 + 2,
                            nn::Activation::identity, nn::Activation::identity);
    m.e_block = deepem::EBlock::create(cfg.seed * 4 + 3);
    if (cfg.critic == CriticKind::discriminator) {
      m.discriminator = critic::Discriminator::create(32, cfg.seed * 4 + 4);
      m.has_discriminator = true;
    }
    return m;
  }

  std::vector<ad::NodePtr> parameters() const {
    std::vector<ad::NodePtr> ps = f_g.parameters();
    for (auto& p : f_c.parameters()) ps.push_back(p);
    for (auto& p : e_block.parameters()) ps.push_back(p);
    if (has_discriminator)
      for (auto& p : discriminator.parameters()) ps.push_back(p);
    return ps;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_cls = 0.0;
  double l_adv = 0.0;
  double l_cons = 0.0;
  double source_map = 0.0;
  double target_map = 0.0;
  gmm::Gmm2 gmm_src;
  gmm::Gmm2 gmm_tgt;
  std::size_t skipped_batches = 0;
  double wall_per_batch = 0.0;  // seconds; excluded from the serialized log
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

// ---------------------------------------------------------------------------
// Asymmetric loss for multi-label classification.
// ---------------------------------------------------------------------------

inline ad::NodePtr asl_loss(const ad::NodePtr& z, const std::vector<int>& labels,
                            double gamma_pos, double gamma_neg, double margin) {
  if (z->value.numel() != labels.size())
    throw std::invalid_argument("asl_loss: label shape mismatch");
  Tensor y(z->value.shape);
  for (std::size_t i = 0; i < labels.size(); ++i)
    y.data[i] = static_cast<double>(labels[i]);
  auto yc = ad::make_constant(std::move(y));
  auto one = ad::make_constant(Tensor::scalar(1.0));

  auto zc = ad::clamp(z, 1e-7, 1.0 - 1e-7);
  auto pos = ad::mul(yc, ad::mul(ad::pow_scalar(ad::sub(one, zc), gamma_pos),
                                 ad::log(zc)));
  auto zm = ad::max_scalar(ad::add_scalar(zc, -margin), 1e-7);
  auto neg = ad::mul(ad::sub(one, yc),
                     ad::mul(ad::pow_scalar(zm, gamma_neg),
                             ad::log(ad::sub(one, zm))));
  return ad::scalar_mul(ad::mean(ad::add(pos, neg)), -1.0);
}

// ---------------------------------------------------------------------------
// Forward helpers.
// ---------------------------------------------------------------------------

inline ad::NodePtr features_of(const Model& m, const ad::NodePtr& x) {
  return nn::forward_mlp(m.f_g, x);
}

inline ad::NodePtr predictions_of(const Model& m, const ad::NodePtr& feats) {
  return ad::sigmoid(nn::forward_mlp(m.f_c, feats));
}

inline std::vector<double> predict(const Model& m,
                                   const data::MultiLabelDataset& ds) {
  Tensor x({ds.n, ds.d}, ds.features);
  auto z = predictions_of(m, features_of(m, ad::make_constant(std::move(x))));
  return z->value.data;
}

inline metrics::MetricReport evaluate_model(const Model& m,
                                            const data::MultiLabelDataset& ds,
                                            double tau) {
  return metrics::evaluate(predict(m, ds), ds.labels, ds.n, ds.C, tau);
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

inline double grl_coefficient(const ExperimentConfig& cfg, double progress) {
  if (cfg.grl_schedule == GrlSchedule::constant) return 1.0;
  return 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
}

inline std::pair<Model, TrainLog> train(const ExperimentConfig& cfg,
                                        const data::MultiLabelDataset& src,
                                        const data::MultiLabelDataset& tgt) {
  if (src.d != tgt.d || src.C != tgt.C)
    throw std::invalid_argument("train: source/target dims differ");

  Model model = Model::create(cfg);
  auto params = model.parameters();

  const std::size_t src_per_epoch =
      data::batches(src, cfg.batch_size, cfg.seed, 0).size();
  const std::size_t tgt_per_epoch =
      data::batches(tgt, cfg.batch_size, cfg.seed + 1, 0, false).size();
  const std::size_t steps_per_epoch = std::max(src_per_epoch, tgt_per_epoch);
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  auto adam = nn::AdamState::create(params, cfg.max_lr, total_steps);

  critic::CriticWeights cw{cfg.alpha1, cfg.alpha2};
  const bool gmm_critic = cfg.critic == CriticKind::w2 ||
                          cfg.critic == CriticKind::kl ||
                          cfg.critic == CriticKind::w1;

  TrainLog log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Independent iterators; the shorter side recycles with a fresh
    // permutation until the longer one is exhausted.
    auto src_batches = data::batches(src, cfg.batch_size, cfg.seed, epoch * 8191);
    auto tgt_batches =
        data::batches(tgt, cfg.batch_size, cfg.seed + 1, epoch * 8191, false);
    std::size_t si = 0, ti = 0, s_cycle = 1, t_cycle = 1;

    EpochRecord rec;
    rec.epoch = epoch;
    const auto epoch_start = std::chrono::steady_clock::now();

    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step) {
      if (si >= src_batches.size()) {
        src_batches =
            data::batches(src, cfg.batch_size, cfg.seed, epoch * 8191 + s_cycle++);
        si = 0;
      }
      if (ti >= tgt_batches.size()) {
        tgt_batches = data::batches(tgt, cfg.batch_size, cfg.seed + 1,
                                    epoch * 8191 + t_cycle++, false);
        ti = 0;
      }
      const data::Batch& sb = src_batches[si++];
      const data::Batch& tb = tgt_batches[ti++];

      nn::zero_grads(params);
      auto x_src = ad::make_constant(sb.features);
      auto feats_src = features_of(model, x_src);
      auto z_cls = predictions_of(model, feats_src);
      auto l_cls = asl_loss(z_cls, sb.labels, cfg.asl_gamma_pos,
                            cfg.asl_gamma_neg, cfg.asl_margin);
      rec.l_cls += l_cls->value.data[0];

      ad::NodePtr total = l_cls;
      if (cfg.critic != CriticKind::none && cfg.lambda > 0.0) {
        const double coeff = grl_coefficient(
            cfg, static_cast<double>(step) / static_cast<double>(total_steps));
        try {
          auto x_tgt = ad::make_constant(tb.features);
          auto feats_tgt = features_of(model, x_tgt);
          ad::NodePtr l_adv;
          ad::NodePtr l_cons;
          if (cfg.critic == CriticKind::discriminator) {
            l_adv = critic::discriminator_loss(model.discriminator,
                                               ad::grl(feats_src, coeff),
                                               ad::grl(feats_tgt, coeff));
          } else {
            auto z_s = predictions_of(model, ad::grl(feats_src, coeff));
            auto z_t = predictions_of(model, ad::grl(feats_tgt, coeff));
            if (cfg.critic == CriticKind::kmeans) {
              l_adv = critic::kmeans_critic(z_s, z_t, cw, cfg.sigma_floor);
            } else {
              auto theta_s =
                  deepem::deepem_estimate(model.e_block, z_s, cfg.sigma_floor);
              auto theta_t =
                  deepem::deepem_estimate(model.e_block, z_t, cfg.sigma_floor);
              rec.gmm_src = theta_s.values();
              rec.gmm_tgt = theta_t.values();
              switch (cfg.critic) {
                case CriticKind::kl:
                  l_adv = critic::kl_loss(theta_s, theta_t, cw);
                  break;
                case CriticKind::w1:
                  l_adv = critic::w1_loss(theta_s, theta_t, cw);
                  break;
                default:
                  l_adv = critic::adversarial_loss(theta_s, theta_t, cw);
              }
              if (gmm_critic && cfg.beta > 0.0) {
                auto cons = ad::add(
                    deepem::consistency_loss(model.e_block, z_s, cfg.sigma_floor),
                    deepem::consistency_loss(model.e_block, z_t, cfg.sigma_floor));
                l_cons = ad::scalar_mul(cons, 0.5);
              }
            }
          }
          rec.l_adv += l_adv->value.data[0];
          ad::NodePtr adv_term = l_adv;
          if (l_cons) {
            rec.l_cons += l_cons->value.data[0];
            adv_term = ad::add(l_adv, ad::scalar_mul(l_cons, cfg.beta));
          }
          total = ad::add(l_cls, ad::scalar_mul(adv_term, cfg.lambda));
        } catch (const gmm::DegenerateComponentError&) {
          ++rec.skipped_batches;  // adversarial term skipped for this batch
        } catch (const std::invalid_argument&) {
          ++rec.skipped_batches;  // e.g. constant predictions in kmeans
        }
      }
      ad::backward(total);
      nn::adam_step(params, adam);
    }

    const auto epoch_end = std::chrono::steady_clock::now();
    rec.wall_per_batch =
        std::chrono::duration<double>(epoch_end - epoch_start).count() /
        static_cast<double>(steps_per_epoch);
    rec.l_cls /= static_cast<double>(steps_per_epoch);
    rec.l_adv /= static_cast<double>(steps_per_epoch);
    rec.l_cons /= static_cast<double>(steps_per_epoch);
    rec.source_map = evaluate_model(model, src, cfg.tau).map;
    rec.target_map = evaluate_model(model, tgt, cfg.tau).map;
    log.epochs.push_back(rec);
  }
  return {std::move(model), std::move(log)};
}

// ---------------------------------------------------------------------------
// Train log serialization: line-delimited JSON, one object per epoch.
// Wall-clock stays in memory only so identical runs produce identical files.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string gmm_json(const gmm::Gmm2& m) {
  return "{\"pi\":[" + num(m.c1.weight) + "," + num(m.c2.weight) +
         "],\"mu\":[" + num(m.c1.mean) + "," + num(m.c2.mean) +
         "],\"sigma\":[" + num(m.c1.stddev) + "," + num(m.c2.stddev) + "]}";
}

}  // namespace detail

inline void write_train_log(const TrainLog& log, std::ostream& os) {
  for (const auto& r : log.epochs) {
    os << "{\"epoch\":" << r.epoch << ",\"l_cls\":" << detail::num(r.l_cls)
       << ",\"l_adv\":" << detail::num(r.l_adv)
       << ",\"l_cons\":" << detail::num(r.l_cons)
       << ",\"source_map\":" << detail::num(r.source_map)
       << ",\"target_map\":" << detail::num(r.target_map)
       << ",\"gmm_src\":" << detail::gmm_json(r.gmm_src)
       << ",\"gmm_tgt\":" << detail::gmm_json(r.gmm_tgt)
       << ",\"skipped_batches\":" << r.skipped_batches << "}\n";
  }
}

inline void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_train_log: cannot open " + path);
  write_train_log(log, os);
}

// ---------------------------------------------------------------------------
// Model snapshots.
// ---------------------------------------------------------------------------

namespace detail {

inline void collect(const nn::Mlp& net, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".w",
                     net.layers[i].weights->value);
    out.emplace_back(prefix + "." + std::to_string(i) + ".b",
                     net.layers[i].bias->value);
  }
}

inline void restore(nn::Mlp& net, const std::string& prefix,
                    const std::vector<std::pair<std::string, Tensor>>& named) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::string wn = prefix + "." + std::to_string(i) + ".w";
    const std::string bn = prefix + "." + std::to_string(i) + ".b";
    bool got_w = false, got_b = false;
    for (const auto& [name, t] : named) {
      if (name == wn) {
        net.layers[i].weights->value = t;
        got_w = true;
      } else if (name == bn) {
        net.layers[i].bias->value = t;
        got_b = true;
      }
    }
    if (!got_w || !got_b)
      throw std::runtime_error("model load: missing tensor " + wn);
  }
}

}  // namespace detail

inline void save_model(const Model& m, const std::string& path) {
  std::vector<std::pair<std::string, Tensor>> named;
  detail::collect(m.f_g, "f_g", named);
  detail::collect(m.f_c, "f_c", named);
  detail::collect(m.e_block.net, "e_block", named);
  if (m.has_discriminator) detail::collect(m.discriminator.net, "disc", named);
  nn::save_tensors(path, named);
}

inline Model load_model(const std::string& path) {
  auto named = nn::load_tensors(path);
  // Recover dimensions from the stored tensors.
  std::size_t d = 0, C = 0;
  for (const auto& [name, t] : named) {
    if (name == "f_g.0.w") d = t.rows();
    if (name == "f_c.0.w") C = t.cols();
  }
  if (d == 0 || C == 0)
    throw std::runtime_error("model load: missing f_g/f_c tensors in " + path);
  ExperimentConfig cfg;
  cfg.d = d;
  cfg.C = C;
  Model m = Model::create(cfg);
  detail::restore(m.f_g, "f_g", named);
  detail::restore(m.f_c, "f_c", named);
  detail::restore(m.e_block.net, "e_block", named);
  for (const auto& [name, t] : named)
    if (name.rfind("disc.", 0) == 0 && !m.has_discriminator) {
      m.discriminator = critic::Discriminator::create(32, 0);
      m.has_discriminator = true;
      detail::restore(m.discriminator.net, "disc", named);
      break;
    }
  return m;
}

// ---------------------------------------------------------------------------
// EM-vs-DeepEM timing.
// ---------------------------------------------------------------------------

struct BenchResult {
  double em_mean = 0.0, em_std = 0.0;
  double deepem_mean = 0.0, deepem_std = 0.0;
};

/// Times classic iterative fitting against the single-pass estimator on
/// identical prediction-like batches.
inline BenchResult bench_em(const ExperimentConfig& cfg, std::size_t n_batches,
                            std::size_t scalars_per_batch = 512,
                            double em_rel_tol = 1e-6) {
  if (n_batches < 10) throw std::invalid_argument("bench_em: need >= 10 batches");
  Rng rng(cfg.seed + 99);
  deepem::EBlock eb = deepem::EBlock::create(cfg.seed + 100);

  std::vector<double> em_times, de_times;
  for (std::size_t b = 0; b < n_batches; ++b) {
    // Overlapping components: convergence then takes a realistic number of
    // iterations and the stopping tolerance is actually exercised.
    std::vector<double> xs(scalars_per_batch);
    for (auto& x : xs) {
      const bool hi = rng.uniform() < 0.4;
      x = hi ? rng.normal(0.62, 0.16) : rng.normal(0.38, 0.14);
      x = std::min(std::max(x, 0.0), 1.0);
    }
    {
      const auto t0 = std::chrono::steady_clock::now();
      gmm::FitOptions opt;
      opt.rel_tol = em_rel_tol;
      auto [m, tr] = gmm::fit_em(xs, gmm::default_init(xs), opt);
      (void)m;
      (void)tr;
      const auto t1 = std::chrono::steady_clock::now();
      em_times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    {
      Tensor zt({scalars_per_batch, 1}, xs);
      const auto t0 = std::chrono::steady_clock::now();
      auto theta = deepem::deepem_estimate(eb, ad::make_constant(std::move(zt)));
      (void)theta;
      const auto t1 = std::chrono::steady_clock::now();
      de_times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
  }
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / static_cast<double>(v.size()));
    return std::pair{m, s};
  };
  BenchResult r;
  std::tie(r.em_mean, r.em_std) = stats(em_times);
  std::tie(r.deepem_mean, r.deepem_std) = stats(de_times);
  return r;
}

}  // namespace dfda::trainer
