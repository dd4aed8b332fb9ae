#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dfda/autodiff.hpp"
#include "dfda/gmm.hpp"
#include "dfda/nn.hpp"

namespace dfda::deepem {

/// Pointwise responsibility network: each prediction scalar is mapped to two
/// logits by a shared MLP, row-softmax turns them into soft assignments.
struct EBlock {
  nn::Mlp net;  // 1 -> hidden -> 2

  static EBlock create(std::uint64_t seed,
                       const std::vector<std::size_t>& sizes = {1, 16, 16, 2}) {
    if (sizes.front() != 1 || sizes.back() != 2)
      throw std::invalid_argument("EBlock: net must map 1 scalar to 2 logits");
    return EBlock{nn::init_params(sizes, seed, nn::Activation::relu,
                                  nn::Activation::identity)};
  }

  std::vector<ad::NodePtr> parameters() const { return net.parameters(); }
};

/// Differentiable mixture parameters, components in ascending-mean order.
struct GmmParamsNode {
  std::array<ad::NodePtr, 2> pi;
  std::array<ad::NodePtr, 2> mu;
  std::array<ad::NodePtr, 2> sigma;

  gmm::Gmm2 values() const {
    gmm::Gmm2 m;
    m.c1 = {pi[0]->value.data[0], mu[0]->value.data[0], sigma[0]->value.data[0]};
    m.c2 = {pi[1]->value.data[0], mu[1]->value.data[0], sigma[1]->value.data[0]};
    return m;
  }
};

/// Flatten predictions and emit the (B*C) x 2 responsibility matrix.
inline ad::NodePtr e_block_forward(const EBlock& eb, const ad::NodePtr& z) {
  const std::size_t n = z->value.numel();
  if (n == 0) throw std::invalid_argument("e_block_forward: empty input");
  auto flat = ad::reshape(z, {n, 1});
  return ad::row_softmax(nn::forward_mlp(eb.net, flat));
}

/// Closed-form M-step as graph operations over the flattened predictions.
/// Component order is decided on forward values; gradients flow through the
/// selected branches.
inline GmmParamsNode m_block(const ad::NodePtr& z, const ad::NodePtr& gamma,
                             double sigma_floor = gmm::kDefaultSigmaFloor) {
  const std::size_t n = z->value.numel();
  if (gamma->value.shape.size() != 2 || gamma->value.rows() != n ||
      gamma->value.cols() != 2)
    throw std::invalid_argument("m_block: gamma must be " + std::to_string(n) +
                                "x2, got " +
                                Tensor::shape_str(gamma->value.shape));
  auto flat = ad::reshape(z, {n, 1});
  const double inv_n = 1.0 / static_cast<double>(n);

  GmmParamsNode out;
  for (std::size_t k = 0; k < 2; ++k) {
    Tensor sel({2, 1});
    sel.data[k] = 1.0;
    auto col = ad::matmul(gamma, ad::make_constant(sel));  // n x 1
    auto col_sum = ad::sum(col);
    if (col_sum->value.data[0] <= 1e-8)
      throw gmm::DegenerateComponentError(k + 1, 0);
    out.pi[k] = ad::scalar_mul(col_sum, inv_n);
    auto mu = ad::div(ad::sum(ad::mul(col, flat)), col_sum);
    auto centered = ad::sub(flat, mu);  // scalar broadcast
    auto var = ad::div(ad::sum(ad::mul(col, ad::square(centered))), col_sum);
    out.mu[k] = mu;
    out.sigma[k] =
        ad::max_scalar(ad::sqrt(ad::add_scalar(var, 1e-8)), sigma_floor);
  }
  if (out.mu[1]->value.data[0] < out.mu[0]->value.data[0]) {
    std::swap(out.pi[0], out.pi[1]);
    std::swap(out.mu[0], out.mu[1]);
    std::swap(out.sigma[0], out.sigma[1]);
  }
  return out;
}

/// Single differentiable pass: E-block responsibilities, then the M-block.
inline GmmParamsNode deepem_estimate(const EBlock& eb, const ad::NodePtr& z,
                                     double sigma_floor = gmm::kDefaultSigmaFloor) {
  return m_block(z, e_block_forward(eb, z), sigma_floor);
}

/// Cross-entropy between E-block responsibilities and the analytic EM
/// posteriors of the current (detached) M-block parameters; mean over rows.
inline ad::NodePtr consistency_loss(const EBlock& eb, const ad::NodePtr& z,
                                    double sigma_floor = gmm::kDefaultSigmaFloor) {
  auto gamma = e_block_forward(eb, z);
  const std::size_t n = gamma->value.rows();

  // Detached M-step on the forward values, then analytic posteriors.
  std::vector<double> zs(z->value.data);
  std::vector<std::array<double, 2>> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = {gamma->value.at(i, 0), gamma->value.at(i, 1)};
  gmm::MStepOptions opt;
  opt.sigma_floor = sigma_floor;
  gmm::Gmm2 theta = gmm::m_step(zs, g, opt);
  auto targets_soft = gmm::e_step(theta, zs);

  Tensor target({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    target.at(i, 0) = targets_soft[i][0];
    target.at(i, 1) = targets_soft[i][1];
  }
  auto log_gamma = ad::log(ad::max_scalar(gamma, 1e-12));
  auto per_entry = ad::mul(ad::make_constant(std::move(target)), log_gamma);
  return ad::scalar_mul(ad::sum(per_entry), -1.0 / static_cast<double>(n));
}

}  // namespace dfda::deepem
