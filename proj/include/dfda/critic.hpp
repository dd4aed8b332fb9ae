#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dfda/autodiff.hpp"
#include "dfda/deepem.hpp"
#include "dfda/gmm.hpp"
#include "dfda/nn.hpp"

namespace dfda::critic {

struct CriticWeights {
  double alpha1 = 0.5;
  double alpha2 = 0.5;
};

// ---------------------------------------------------------------------------
// Closed-form distances between univariate Gaussians (plain arithmetic).
// ---------------------------------------------------------------------------

/// Squared Frechet / 2-Wasserstein distance.
inline double w2_squared(double mu1, double sigma1, double mu2, double sigma2) {
  const double dm = mu1 - mu2;
  const double ds = sigma1 - sigma2;
  return dm * dm + ds * ds;
}

/// KL(N(mu1, sigma1) || N(mu2, sigma2)).
inline double kl_gaussian(double mu1, double sigma1, double mu2, double sigma2) {
  const double dm = mu1 - mu2;
  return std::log(sigma2 / sigma1) +
         (sigma1 * sigma1 + dm * dm) / (2.0 * sigma2 * sigma2) - 0.5;
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / 1.4142135623730951);
}

/// 1-Wasserstein distance under the comonotone (quantile) coupling:
/// E|a + b Z| with a = mu1-mu2, b = sigma1-sigma2, Z standard normal.
inline double w1_gaussian(double mu1, double sigma1, double mu2, double sigma2) {
  const double a = mu1 - mu2;
  const double b = std::abs(sigma1 - sigma2);
  if (b == 0.0) return std::abs(a);
  return b * std::sqrt(2.0 / 3.14159265358979323846) *
             std::exp(-a * a / (2.0 * b * b)) +
         a * (1.0 - 2.0 * normal_cdf(-a / b));
}

// ---------------------------------------------------------------------------
// Differentiable critics over GmmParamsNode pairs.
// ---------------------------------------------------------------------------

namespace detail {

inline ad::NodePtr w2sq_node(const ad::NodePtr& mu_a, const ad::NodePtr& sig_a,
                             const ad::NodePtr& mu_b, const ad::NodePtr& sig_b) {
  return ad::add(ad::square(ad::sub(mu_a, mu_b)),
                 ad::square(ad::sub(sig_a, sig_b)));
}

inline ad::NodePtr kl_node(const ad::NodePtr& mu_a, const ad::NodePtr& sig_a,
                           const ad::NodePtr& mu_b, const ad::NodePtr& sig_b) {
  auto ratio = ad::log(ad::div(sig_b, sig_a));
  auto num = ad::add(ad::square(sig_a), ad::square(ad::sub(mu_a, mu_b)));
  auto quad = ad::div(num, ad::scalar_mul(ad::square(sig_b), 2.0));
  return ad::add_scalar(ad::add(ratio, quad), -0.5);
}

inline ad::NodePtr w1_node(const ad::NodePtr& mu_a, const ad::NodePtr& sig_a,
                           const ad::NodePtr& mu_b, const ad::NodePtr& sig_b) {
  // Smoothed |sigma_a - sigma_b| keeps the b = 0 branch differentiable.
  auto a = ad::sub(mu_a, mu_b);
  auto b2 = ad::add_scalar(ad::square(ad::sub(sig_a, sig_b)), 1e-24);
  auto s = ad::sqrt(b2);
  auto gauss = ad::exp(ad::scalar_mul(ad::div(ad::square(a), b2), -0.5));
  auto term1 = ad::scalar_mul(ad::mul(s, gauss),
                              std::sqrt(2.0 / 3.14159265358979323846));
  auto phi = ad::normal_cdf(ad::scalar_mul(ad::div(a, s), -1.0));
  auto term2 =
      ad::mul(a, ad::add_scalar(ad::scalar_mul(phi, -2.0), 1.0));
  return ad::add(term1, term2);
}

}  // namespace detail

/// Eq.-style component-wise squared 2-Wasserstein adversarial loss; mixture
/// weights are deliberately ignored.
inline ad::NodePtr adversarial_loss(const deepem::GmmParamsNode& src,
                                    const deepem::GmmParamsNode& tgt,
                                    const CriticWeights& w) {
  if (w.alpha1 < 0.0 || w.alpha2 < 0.0 || w.alpha1 + w.alpha2 <= 0.0)
    throw std::invalid_argument("adversarial_loss: invalid alpha weights");
  auto t1 = ad::scalar_mul(
      detail::w2sq_node(src.mu[0], src.sigma[0], tgt.mu[0], tgt.sigma[0]),
      w.alpha1);
  auto t2 = ad::scalar_mul(
      detail::w2sq_node(src.mu[1], src.sigma[1], tgt.mu[1], tgt.sigma[1]),
      w.alpha2);
  return ad::add(t1, t2);
}

/// KL variant of the component-wise critic.
inline ad::NodePtr kl_loss(const deepem::GmmParamsNode& src,
                           const deepem::GmmParamsNode& tgt,
                           const CriticWeights& w) {
  auto t1 = ad::scalar_mul(
      detail::kl_node(src.mu[0], src.sigma[0], tgt.mu[0], tgt.sigma[0]),
      w.alpha1);
  auto t2 = ad::scalar_mul(
      detail::kl_node(src.mu[1], src.sigma[1], tgt.mu[1], tgt.sigma[1]),
      w.alpha2);
  return ad::add(t1, t2);
}

/// 1-Wasserstein variant of the component-wise critic.
inline ad::NodePtr w1_loss(const deepem::GmmParamsNode& src,
                           const deepem::GmmParamsNode& tgt,
                           const CriticWeights& w) {
  auto t1 = ad::scalar_mul(
      detail::w1_node(src.mu[0], src.sigma[0], tgt.mu[0], tgt.sigma[0]),
      w.alpha1);
  auto t2 = ad::scalar_mul(
      detail::w1_node(src.mu[1], src.sigma[1], tgt.mu[1], tgt.sigma[1]),
      w.alpha2);
  return ad::add(t1, t2);
}

// ---------------------------------------------------------------------------
// k-means critic: hard 2-means assignments frozen from forward values,
// cluster statistics recomputed as differentiable ops.
// ---------------------------------------------------------------------------

namespace detail {

/// Lloyd's algorithm on scalars, centers initialized at min/max.
inline std::vector<std::array<double, 2>> two_means_assign(
    const std::vector<double>& xs) {
  double lo = xs[0], hi = xs[0];
  for (double x : xs) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (lo == hi)
    throw std::invalid_argument("kmeans_critic: needs >= 2 distinct values");
  double c1 = lo, c2 = hi;
  std::vector<int> assign(xs.size(), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    double s1 = 0.0, s2 = 0.0;
    std::size_t n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const int a = std::abs(xs[i] - c1) <= std::abs(xs[i] - c2) ? 0 : 1;
      if (a != assign[i]) changed = true;
      assign[i] = a;
      if (a == 0) {
        s1 += xs[i];
        ++n1;
      } else {
        s2 += xs[i];
        ++n2;
      }
    }
    if (n1 == 0 || n2 == 0)
      throw std::runtime_error("kmeans_critic: empty cluster");
    c1 = s1 / static_cast<double>(n1);
    c2 = s2 / static_cast<double>(n2);
    if (!changed && iter > 0) break;
  }
  std::vector<std::array<double, 2>> gamma(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    gamma[i] = {assign[i] == 0 ? 1.0 : 0.0, assign[i] == 1 ? 1.0 : 0.0};
  return gamma;
}

inline deepem::GmmParamsNode cluster_params(const ad::NodePtr& z,
                                            double sigma_floor) {
  const auto gamma = two_means_assign(z->value.data);
  Tensor g({gamma.size(), 2});
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    g.at(i, 0) = gamma[i][0];
    g.at(i, 1) = gamma[i][1];
  }
  return deepem::m_block(z, ad::make_constant(std::move(g)), sigma_floor);
}

}  // namespace detail

/// Hard-assignment ablation of the GMM critic.
inline ad::NodePtr kmeans_critic(const ad::NodePtr& z_src,
                                 const ad::NodePtr& z_tgt,
                                 const CriticWeights& w,
                                 double sigma_floor = gmm::kDefaultSigmaFloor) {
  auto src = detail::cluster_params(z_src, sigma_floor);
  auto tgt = detail::cluster_params(z_tgt, sigma_floor);
  return adversarial_loss(src, tgt, w);
}

// ---------------------------------------------------------------------------
// Discriminator baseline (DANN-style).
// ---------------------------------------------------------------------------

struct Discriminator {
  nn::Mlp net;  // d -> ... -> 1 logit

  static Discriminator create(std::size_t feature_dim, std::uint64_t seed) {
    return Discriminator{nn::init_params({feature_dim, 32, 1}, seed,
                                         nn::Activation::relu,
                                         nn::Activation::identity)};
  }

  std::vector<ad::NodePtr> parameters() const { return net.parameters(); }
};

inline ad::NodePtr discriminator_loss(const Discriminator& d,
                                      const ad::NodePtr& f_src,
                                      const ad::NodePtr& f_tgt) {
  auto p_src = ad::clamp(ad::sigmoid(nn::forward_mlp(d.net, f_src)), 1e-7,
                         1.0 - 1e-7);
  auto p_tgt = ad::clamp(ad::sigmoid(nn::forward_mlp(d.net, f_tgt)), 1e-7,
                         1.0 - 1e-7);
  auto term_src = ad::scalar_mul(ad::mean(ad::log(p_src)), -1.0);
  auto one_minus =
      ad::sub(ad::make_constant(Tensor::scalar(1.0)), p_tgt);  // broadcast
  auto term_tgt = ad::scalar_mul(ad::mean(ad::log(one_minus)), -1.0);
  return ad::add(term_src, term_tgt);
}

}  // namespace dfda::critic
