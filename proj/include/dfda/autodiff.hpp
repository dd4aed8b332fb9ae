#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dfda/tensor.hpp"

namespace dfda::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph. `backward_fn` scatters this node's
/// gradient into its parents; parents are held alive by shared ownership so
/// a root pointer keeps the whole graph reachable.
struct Node {
  Tensor value;
  Tensor grad;  // lazily sized on first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  std::string kind = "leaf";

  void ensure_grad() {
    if (grad.data.size() != value.data.size()) grad = Tensor(value.shape);
  }
  void zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
};

inline NodePtr make_leaf(Tensor v, bool requires_grad = true) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

inline NodePtr make_constant(Tensor v) { return make_leaf(std::move(v), false); }

namespace detail {

[[noreturn]] inline void shape_error(const std::string& kind, const Tensor& a,
                                     const Tensor& b) {
  throw std::invalid_argument("op '" + kind + "': shape mismatch " +
                              Tensor::shape_str(a.shape) + " vs " +
                              Tensor::shape_str(b.shape));
}

inline NodePtr make_op(std::string kind, Tensor value,
                       std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->kind = std::move(kind);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

// Broadcast classes for binary elementwise ops.
enum class Bcast { same, a_scalar, b_scalar, a_row, b_row };

inline Bcast classify(const std::string& kind, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::same;
  if (a.is_scalar()) return Bcast::a_scalar;
  if (b.is_scalar()) return Bcast::b_scalar;
  if (a.shape.size() == 2 && b.shape.size() == 2 && a.cols() == b.cols()) {
    if (a.rows() == 1) return Bcast::a_row;
    if (b.rows() == 1) return Bcast::b_row;
  }
  shape_error(kind, a, b);
}

// Generic elementwise binary op with scalar and row-vector broadcasting.
// fwd(x, y) -> value; dfa/dfb give the partials w.r.t. each operand.
template <class F, class Da, class Db>
NodePtr binary_op(const std::string& kind, const NodePtr& a, const NodePtr& b,
                  F fwd, Da dfa, Db dfb) {
  const Tensor& va = a->value;
  const Tensor& vb = b->value;
  const Bcast bc = classify(kind, va, vb);
  const Tensor& big = (bc == Bcast::a_scalar || bc == Bcast::a_row) ? vb : va;
  Tensor out(big.shape);
  const std::size_t n = big.numel();
  const std::size_t a_cols = bc == Bcast::a_row ? va.cols() : 0;
  const std::size_t b_cols = bc == Bcast::b_row ? vb.cols() : 0;
  auto a_index = [bc, a_cols](std::size_t i) -> std::size_t {
    switch (bc) {
      case Bcast::a_scalar: return 0;
      case Bcast::a_row: return i % a_cols;
      default: return i;
    }
  };
  auto b_index = [bc, b_cols](std::size_t i) -> std::size_t {
    switch (bc) {
      case Bcast::b_scalar: return 0;
      case Bcast::b_row: return i % b_cols;
      default: return i;
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    out.data[i] = fwd(va.data[a_index(i)], vb.data[b_index(i)]);
  return make_op(kind, std::move(out), {a, b},
                 [bc, a_index, b_index, dfa, dfb](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pb = *self.parents[1];
                   pa.ensure_grad();
                   pb.ensure_grad();
                   const std::size_t n = self.value.numel();
                   for (std::size_t i = 0; i < n; ++i) {
                     const double g = self.grad.data[i];
                     const std::size_t ia = a_index(i);
                     const std::size_t ib = b_index(i);
                     const double x = pa.value.data[ia];
                     const double y = pb.value.data[ib];
                     pa.grad.data[ia] += g * dfa(x, y);
                     pb.grad.data[ib] += g * dfb(x, y);
                   }
                 });
}

// Elementwise unary op: fwd(x) -> value, dfn(x, fx) -> derivative.
template <class F, class D>
NodePtr unary_op(const std::string& kind, const NodePtr& a, F fwd, D dfn) {
  Tensor out(a->value.shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    out.data[i] = fwd(a->value.data[i]);
  return make_op(kind, std::move(out), {a}, [dfn](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      p.grad.data[i] +=
          self.grad.data[i] * dfn(p.value.data[i], self.value.data[i]);
  });
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  return detail::binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline NodePtr scalar_mul(const NodePtr& a, double c) {
  return detail::unary_op(
      "scalar-mul", a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

inline NodePtr add_scalar(const NodePtr& a, double c) {
  return detail::unary_op(
      "add-scalar", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

inline NodePtr sigmoid(const NodePtr& a) {
  return detail::unary_op(
      "sigmoid", a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double fx) { return fx * (1.0 - fx); });
}

inline NodePtr relu(const NodePtr& a) {
  return detail::unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline NodePtr exp(const NodePtr& a) {
  return detail::unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double fx) { return fx; });
}

inline NodePtr log(const NodePtr& a) {
  for (double x : a->value.data)
    if (!(x > 0.0))
      throw std::domain_error("op 'log': nonpositive input " +
                              std::to_string(x));
  return detail::unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline NodePtr sqrt(const NodePtr& a) {
  for (double x : a->value.data)
    if (!(x > 0.0))
      throw std::domain_error("op 'sqrt': nonpositive input " +
                              std::to_string(x));
  return detail::unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double fx) { return 0.5 / fx; });
}

inline NodePtr square(const NodePtr& a) {
  return detail::unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

inline NodePtr pow_scalar(const NodePtr& a, double p) {
  if (p == 0.0) {
    return detail::unary_op(
        "pow-scalar", a, [](double) { return 1.0; },
        [](double, double) { return 0.0; });
  }
  for (double x : a->value.data)
    if (!(x > 0.0))
      throw std::domain_error("op 'pow-scalar': nonpositive base " +
                              std::to_string(x));
  return detail::unary_op(
      "pow-scalar", a, [p](double x) { return std::pow(x, p); },
      [p](double x, double fx) { return p * fx / x; });
}

/// Clamp to [lo, hi]; gradient passes only where the input is strictly inside.
inline NodePtr clamp(const NodePtr& a, double lo, double hi) {
  return detail::unary_op(
      "clamp", a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

/// max(x, c) elementwise; subgradient 0 at the kink's constant side.
inline NodePtr max_scalar(const NodePtr& a, double c) {
  return detail::unary_op(
      "max-scalar", a, [c](double x) { return x > c ? x : c; },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

/// Standard normal CDF; derivative is the standard normal density.
inline NodePtr normal_cdf(const NodePtr& a) {
  return detail::unary_op(
      "normal-cdf", a,
      [](double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); },
      [](double x, double) {
        return 0.3989422804014326779 * std::exp(-0.5 * x * x);
      });
}

inline NodePtr sum(const NodePtr& a) {
  double s = 0.0;
  for (double x : a->value.data) s += x;
  return detail::make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad.data[0];
    for (auto& gi : p.grad.data) gi += g;
  });
}

inline NodePtr mean(const NodePtr& a) {
  const double n = static_cast<double>(a->value.numel());
  double s = 0.0;
  for (double x : a->value.data) s += x;
  return detail::make_op("mean", Tensor::scalar(s / n), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad.data[0] / n;
    for (auto& gi : p.grad.data) gi += g;
  });
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Tensor& va = a->value;
  const Tensor& vb = b->value;
  if (va.shape.size() != 2 || vb.shape.size() != 2 || va.cols() != vb.rows())
    detail::shape_error("matmul", va, vb);
  const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double x = va.at(i, l);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += x * vb.at(l, j);
    }
  return detail::make_op("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    pa.ensure_grad();
    pb.ensure_grad();
    // dA = G * B^T ; dB = A^T * G
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad.at(i, j);
        for (std::size_t l = 0; l < k; ++l) {
          pa.grad.at(i, l) += g * pb.value.at(l, j);
          pb.grad.at(l, j) += g * pa.value.at(i, l);
        }
      }
  });
}

inline NodePtr row_softmax(const NodePtr& a) {
  const Tensor& v = a->value;
  if (v.shape.size() != 2)
    throw std::invalid_argument("op 'row-softmax': expects 2-D, got " +
                                Tensor::shape_str(v.shape));
  const std::size_t m = v.rows(), n = v.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = v.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, v.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(v.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return detail::make_op("row-softmax", std::move(out), {a}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        dot += self.grad.at(i, j) * self.value.at(i, j);
      for (std::size_t j = 0; j < n; ++j)
        p.grad.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

inline NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  if (parts.empty())
    throw std::invalid_argument("op 'concat-rows': empty input list");
  const std::size_t n = parts[0]->value.cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p->value.shape.size() != 2 || p->value.cols() != n)
      detail::shape_error("concat-rows", parts[0]->value, p->value);
    m += p->value.rows();
  }
  Tensor out({m, n});
  std::size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
    r += p->value.rows();
  }
  return detail::make_op("concat-rows", std::move(out), parts, [n](Node& self) {
    std::size_t r = 0;
    for (auto& pp : self.parents) {
      pp->ensure_grad();
      const std::size_t cnt = pp->value.numel();
      for (std::size_t i = 0; i < cnt; ++i)
        pp->grad.data[i] += self.grad.data[r * n + i];
      r += pp->value.rows();
    }
  });
}

inline NodePtr slice_rows(const NodePtr& a, std::size_t r0, std::size_t r1) {
  const Tensor& v = a->value;
  if (v.shape.size() != 2 || r0 >= r1 || r1 > v.rows())
    throw std::invalid_argument("op 'slice-rows': invalid range [" +
                                std::to_string(r0) + ", " + std::to_string(r1) +
                                ") for " + Tensor::shape_str(v.shape));
  const std::size_t n = v.cols();
  Tensor out({r1 - r0, n});
  std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(r0 * n),
            v.data.begin() + static_cast<std::ptrdiff_t>(r1 * n),
            out.data.begin());
  return detail::make_op("slice-rows", std::move(out), {a}, [r0, n](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      p.grad.data[r0 * n + i] += self.grad.data[i];
  });
}

inline NodePtr reshape(const NodePtr& a, std::vector<std::size_t> shape) {
  if (Tensor::numel_of(shape) != a->value.numel())
    throw std::invalid_argument("op 'reshape': element count mismatch");
  Tensor out(std::move(shape), a->value.data);
  return detail::make_op("reshape", std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      p.grad.data[i] += self.grad.data[i];
  });
}

/// Gradient reversal: identity forward, upstream gradient scaled by
/// -coefficient on the way back.
inline NodePtr grl(const NodePtr& a, double coefficient) {
  if (coefficient < 0.0)
    throw std::invalid_argument("grl: coefficient must be nonnegative");
  Tensor out = a->value;
  return detail::make_op("grl", std::move(out), {a}, [coefficient](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      p.grad.data[i] += -coefficient * self.grad.data[i];
  });
}

/// Reverse accumulation from a scalar root. Every reachable requires_grad
/// node ends up holding d(root)/d(node), added onto whatever its gradient
/// buffer already contained.
inline void backward(const NodePtr& root) {
  if (!root->value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar, got " +
                                Tensor::shape_str(root->value.shape));
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace dfda::ad
