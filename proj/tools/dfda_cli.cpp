// Command-line surface for the domain-adaptation library: synthetic data
// generation, training, evaluation, GMM fitting, EM benchmarking, histogram
// export and the alpha sensitivity sweep.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfda/config.hpp"
#include "dfda/critic.hpp"
#include "dfda/data.hpp"
#include "dfda/deepem.hpp"
#include "dfda/gmm.hpp"
#include "dfda/metrics.hpp"
#include "dfda/trainer.hpp"

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string report_json(const dfda::metrics::MetricReport& r) {
  return "{\"map\":" + fmt(r.map) + ",\"cp\":" + fmt(r.cp) +
         ",\"cr\":" + fmt(r.cr) + ",\"cf1\":" + fmt(r.cf1) +
         ",\"op\":" + fmt(r.op) + ",\"or\":" + fmt(r.or_) +
         ",\"of1\":" + fmt(r.of1) + "}";
}

std::string gmm_json(const dfda::gmm::Gmm2& m) {
  return "{\"components\":[{\"pi\":" + fmt(m.c1.weight) +
         ",\"mu\":" + fmt(m.c1.mean) + ",\"sigma\":" + fmt(m.c1.stddev) +
         "},{\"pi\":" + fmt(m.c2.weight) + ",\"mu\":" + fmt(m.c2.mean) +
         ",\"sigma\":" + fmt(m.c2.stddev) + "}]}";
}

std::vector<double> load_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<double> xs;
  std::string tok;
  while (is) {
    int c = is.peek();
    if (c == EOF) break;
    if (c == ',' || c == '\n' || c == '\r' || c == ' ' || c == '\t') {
      is.get();
      continue;
    }
    is >> tok;
    xs.push_back(std::stod(tok));
  }
  if (xs.size() < 2) throw std::runtime_error("need >= 2 values in " + path);
  return xs;
}

/// Pre-train a fresh E-block on the sample with the consistency loss, then
/// run the single differentiable pass.
dfda::gmm::Gmm2 deepem_fit(const std::vector<double>& xs) {
  using namespace dfda;
  deepem::EBlock eb = deepem::EBlock::create(0);
  auto params = eb.parameters();
  auto adam = nn::AdamState::create(params, 1e-2, 500);
  Tensor zt({xs.size(), 1}, xs);
  auto z = ad::make_constant(zt);
  for (int i = 0; i < 500; ++i) {
    nn::zero_grads(params);
    auto loss = deepem::consistency_loss(eb, z);
    ad::backward(loss);
    nn::adam_step(params, adam);
  }
  return deepem::deepem_estimate(eb, z).values();
}

int run_sweep(const dfda::ExperimentConfig& base, const std::string& grid) {
  double lo = 0, hi = 0, step = 0;
  if (std::sscanf(grid.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 ||
      step <= 0.0)
    throw std::runtime_error("bad --grid, expected lo:hi:step");
  auto [src, tgt] = dfda::data::generate_pair(base.seed, base.n_per_domain,
                                              base.d, base.C, base.shift);
  std::cout << "alpha1,alpha2,target_map\n";
  for (double a = lo; a <= hi + 1e-12; a += step) {
    dfda::ExperimentConfig cfg = base;
    cfg.alpha1 = a;
    cfg.alpha2 = 1.0 - a;
    auto [model, log] = dfda::trainer::train(cfg, src, tgt);
    const double map = dfda::trainer::evaluate_model(model, tgt, cfg.tau).map;
    std::cout << fmt(a) << "," << fmt(1.0 - a) << "," << fmt(map) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discriminator-free adversarial domain adaptation for "
               "multi-label classification"};
  app.require_subcommand(1);

  std::string cfg_path, src_path, tgt_path, model_path, data_path, out_path,
      log_path, values_path, method = "em", grid = "0.1:0.9:0.1";
  double tau = 0.5;
  std::size_t batches = 100;
  bool legacy_mstep = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset pair");
  gen->add_option("--config", cfg_path, "experiment config JSON")->required();
  gen->add_option("--out-src", src_path, "source CSV output")->required();
  gen->add_option("--out-tgt", tgt_path, "target CSV output")->required();

  auto* train = app.add_subcommand("train", "Run adversarial training");
  train->add_option("--config", cfg_path)->required();
  train->add_option("--src", src_path, "labeled source CSV")->required();
  train->add_option("--tgt", tgt_path, "unlabeled target CSV")->required();
  train->add_option("--out-model", model_path)->required();
  train->add_option("--log", log_path, "per-epoch JSONL log");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--data", data_path)->required();
  eval->add_option("--tau", tau, "decision threshold");

  auto* fit = app.add_subcommand("fit-gmm", "Fit a two-component GMM");
  fit->add_option("--values", values_path, "one value per line")->required();
  fit->add_option("--method", method)->check(CLI::IsMember({"em", "deepem"}));
  fit->add_flag("--legacy-mstep", legacy_mstep,
                "use the previous-iteration mean in the variance update");

  auto* bench = app.add_subcommand("bench-em", "Time classic EM vs DeepEM");
  bench->add_option("--config", cfg_path)->required();
  bench->add_option("--batches", batches);

  auto* hist = app.add_subcommand("hist", "Export the prediction histogram");
  hist->add_option("--model", model_path)->required();
  hist->add_option("--data", data_path)->required();
  hist->add_option("--out", out_path)->required();

  auto* sweep = app.add_subcommand("sweep-alpha", "Alpha sensitivity sweep");
  sweep->add_option("--config", cfg_path)->required();
  sweep->add_option("--grid", grid, "alpha1 grid as lo:hi:step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      auto cfg = dfda::load_config(cfg_path);
      auto [src, tgt] = dfda::data::generate_pair(cfg.seed, cfg.n_per_domain,
                                                  cfg.d, cfg.C, cfg.shift);
      dfda::data::save_csv(src, src_path);
      dfda::data::save_csv(tgt, tgt_path);
    } else if (*train) {
      auto cfg = dfda::load_config(cfg_path);
      auto src = dfda::data::load_csv(src_path);
      auto tgt = dfda::data::load_csv(tgt_path);
      auto [model, log] = dfda::trainer::train(cfg, src, tgt);
      dfda::trainer::save_model(model, model_path);
      if (!log_path.empty()) dfda::trainer::write_train_log(log, log_path);
    } else if (*eval) {
      auto model = dfda::trainer::load_model(model_path);
      auto ds = dfda::data::load_csv(data_path);
      std::cout << report_json(dfda::trainer::evaluate_model(model, ds, tau))
                << "\n";
    } else if (*fit) {
      auto xs = load_values(values_path);
      if (method == "em") {
        dfda::gmm::FitOptions opt;
        opt.legacy_mstep = legacy_mstep;
        auto [m, trace] = dfda::gmm::fit_em(xs, dfda::gmm::default_init(xs), opt);
        std::cout << gmm_json(m) << "\n";
      } else {
        std::cout << gmm_json(deepem_fit(xs)) << "\n";
      }
    } else if (*bench) {
      auto cfg = dfda::load_config(cfg_path);
      auto r = dfda::trainer::bench_em(cfg, batches);
      std::cout << "method,mean_seconds,std_seconds\n";
      std::cout << "em," << fmt(r.em_mean) << "," << fmt(r.em_std) << "\n";
      std::cout << "deepem," << fmt(r.deepem_mean) << "," << fmt(r.deepem_std)
                << "\n";
    } else if (*hist) {
      auto model = dfda::trainer::load_model(model_path);
      auto ds = dfda::data::load_csv(data_path);
      auto h = dfda::metrics::prediction_histogram(
          dfda::trainer::predict(model, ds));
      std::ofstream os(out_path);
      if (!os) throw std::runtime_error("cannot open " + out_path);
      os << "bin_start,bin_end,count\n";
      for (std::size_t i = 0; i < 50; ++i)
        os << fmt(h.bin_edges[i]) << "," << fmt(h.bin_edges[i + 1]) << ","
           << h.counts[i] << "\n";
    } else if (*sweep) {
      return run_sweep(dfda::load_config(cfg_path), grid);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
