#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dfda/autodiff.hpp"

namespace dfda::ad {

struct CheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Compare backward() gradients against central finite differences for a
/// scalar function of several parameter tensors. `f` must rebuild the graph
/// from the given leaves on every call.
inline CheckReport finite_difference_check(
    const std::function<NodePtr(const std::vector<NodePtr>&)>& f,
    std::vector<Tensor> xs, double h, double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h <= 0");

  auto eval = [&](const std::vector<Tensor>& ts) {
    std::vector<NodePtr> leaves;
    leaves.reserve(ts.size());
    for (const auto& t : ts) leaves.push_back(make_leaf(t, true));
    NodePtr root = f(leaves);
    if (!std::isfinite(root->value.data[0]))
      throw std::runtime_error("finite_difference_check: non-finite value");
    return std::pair{root, leaves};
  };

  auto [root, leaves] = eval(xs);
  backward(root);

  CheckReport rep;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    leaves[t]->ensure_grad();
    for (std::size_t i = 0; i < xs[t].numel(); ++i) {
      const double orig = xs[t].data[i];
      xs[t].data[i] = orig + h;
      const double fp = eval(xs).first->value.data[0];
      xs[t].data[i] = orig - h;
      const double fm = eval(xs).first->value.data[0];
      xs[t].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = leaves[t]->grad.data[i];
      const double denom =
          std::max(1e-8, std::max(std::abs(numeric), std::abs(analytic)));
      rep.max_rel_err =
          std::max(rep.max_rel_err, std::abs(numeric - analytic) / denom);
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

/// Single-parameter convenience overload.
inline CheckReport finite_difference_check(
    const std::function<NodePtr(const NodePtr&)>& f, const Tensor& x, double h,
    double tol) {
  return finite_difference_check(
      [&f](const std::vector<NodePtr>& leaves) { return f(leaves[0]); }, {x},
      h, tol);
}

}  // namespace dfda::ad
