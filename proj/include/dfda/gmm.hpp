#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfda::gmm {

inline constexpr double kDefaultSigmaFloor = 1e-4;
inline constexpr double kDensityFloor = 1e-300;

struct Gaussian1D {
  double weight = 0.5;  // pi
  double mean = 0.0;
  double stddev = 1.0;
};

/// Two-component univariate mixture, components kept in ascending-mean order.
struct Gmm2 {
  Gaussian1D c1;
  Gaussian1D c2;

  void order_by_mean() {
    if (c2.mean < c1.mean) std::swap(c1, c2);
  }
};

struct EmTrace {
  std::size_t iterations = 0;
  std::vector<double> log_likelihood_history;
  bool converged = false;
};

struct DegenerateComponentError : std::runtime_error {
  std::size_t component;
  std::size_t iteration;
  DegenerateComponentError(std::size_t comp, std::size_t iter)
      : std::runtime_error("degenerate GMM component " + std::to_string(comp) +
                           " at iteration " + std::to_string(iter)),
        component(comp),
        iteration(iter) {}
};

inline double normal_pdf(double x, double mu, double sigma) {
  static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  const double z = (x - mu) / sigma;
  return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
}

inline double gmm_pdf(const Gmm2& m, double x) {
  return m.c1.weight * normal_pdf(x, m.c1.mean, m.c1.stddev) +
         m.c2.weight * normal_pdf(x, m.c2.mean, m.c2.stddev);
}

inline double log_likelihood(const Gmm2& m, const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("log_likelihood: empty sample");
  double ll = 0.0;
  for (double x : xs) ll += std::log(std::max(gmm_pdf(m, x), kDensityFloor));
  return ll;
}

/// Posterior responsibilities, |xs| x 2, rows summing to 1.
inline std::vector<std::array<double, 2>> e_step(const Gmm2& m,
                                                 const std::vector<double>& xs) {
  std::vector<std::array<double, 2>> gamma(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double a = m.c1.weight * normal_pdf(xs[i], m.c1.mean, m.c1.stddev);
    const double b = m.c2.weight * normal_pdf(xs[i], m.c2.mean, m.c2.stddev);
    const double denom = std::max(a + b, kDensityFloor);
    gamma[i] = {a / denom, b / denom};
  }
  return gamma;
}

struct MStepOptions {
  double sigma_floor = kDefaultSigmaFloor;
  // Use the previous-iteration mean in the variance update instead of the
  // freshly updated one.
  bool legacy_mean = false;
  double legacy_mu1 = 0.0;
  double legacy_mu2 = 0.0;
};

inline Gmm2 m_step(const std::vector<double>& xs,
                   const std::vector<std::array<double, 2>>& gamma,
                   const MStepOptions& opt = {}) {
  if (xs.size() != gamma.size())
    throw std::invalid_argument("m_step: sample/responsibility size mismatch");
  const double n = static_cast<double>(xs.size());
  Gmm2 out;
  Gaussian1D* comps[2] = {&out.c1, &out.c2};
  for (std::size_t k = 0; k < 2; ++k) {
    double sg = 0.0, sgx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sg += gamma[i][k];
      sgx += gamma[i][k] * xs[i];
    }
    if (sg <= 0.0) throw DegenerateComponentError(k + 1, 0);
    const double mu = sgx / sg;
    const double var_center =
        opt.legacy_mean ? (k == 0 ? opt.legacy_mu1 : opt.legacy_mu2) : mu;
    double sgv = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = xs[i] - var_center;
      sgv += gamma[i][k] * d * d;
    }
    comps[k]->weight = sg / n;
    comps[k]->mean = mu;
    comps[k]->stddev = std::max(std::sqrt(sgv / sg), opt.sigma_floor);
  }
  out.order_by_mean();
  return out;
}

struct FitOptions {
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;
  double sigma_floor = kDefaultSigmaFloor;
  bool legacy_mstep = false;
};

inline std::pair<Gmm2, EmTrace> fit_em(const std::vector<double>& xs, Gmm2 init,
                                       const FitOptions& opt = {}) {
  if (xs.size() < 2) throw std::invalid_argument("fit_em: need >= 2 samples");
  if (opt.max_iters < 1) throw std::invalid_argument("fit_em: max_iters < 1");
  Gmm2 model = init;
  model.order_by_mean();
  EmTrace trace;
  double ll = log_likelihood(model, xs);
  trace.log_likelihood_history.push_back(ll);
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    auto gamma = e_step(model, xs);
    MStepOptions mopt;
    mopt.sigma_floor = opt.sigma_floor;
    if (opt.legacy_mstep) {
      mopt.legacy_mean = true;
      mopt.legacy_mu1 = model.c1.mean;
      mopt.legacy_mu2 = model.c2.mean;
    }
    try {
      model = m_step(xs, gamma, mopt);
    } catch (const DegenerateComponentError& e) {
      throw DegenerateComponentError(e.component, it + 1);
    }
    const double ll_new = log_likelihood(model, xs);
    trace.log_likelihood_history.push_back(ll_new);
    ++trace.iterations;
    if (std::abs(ll_new - ll) / std::max(1.0, std::abs(ll_new)) < opt.rel_tol) {
      trace.converged = true;
      ll = ll_new;
      break;
    }
    ll = ll_new;
  }
  return {model, trace};
}

/// Quantile-based starting point: means at the empirical 10th/90th
/// percentiles, both sigmas at half the sample stddev.
inline Gmm2 default_init(const std::vector<double>& xs,
                         double sigma_floor = kDefaultSigmaFloor) {
  if (xs.size() < 2)
    throw std::invalid_argument("default_init: need >= 2 samples");
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  };
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  Gmm2 init;
  init.c1 = {0.5, quantile(0.10), std::max(std::sqrt(var) / 2.0, sigma_floor)};
  init.c2 = {0.5, quantile(0.90), init.c1.stddev};
  init.order_by_mean();
  return init;
}

}  // namespace dfda::gmm
