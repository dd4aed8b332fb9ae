#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <type_traits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dfda/autodiff.hpp"
#include "dfda/rng.hpp"

namespace dfda::nn {

enum class Activation { identity, relu, sigmoid };

/// Affine layer: y = act(x W + b), W stored in x out, b 1 x out.
struct LinearLayer {
  ad::NodePtr weights;
  ad::NodePtr bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weights->value.rows(); }
  std::size_t out_dim() const { return weights->value.cols(); }
};

struct Mlp {
  std::vector<LinearLayer> layers;

  std::vector<ad::NodePtr> parameters() const {
    std::vector<ad::NodePtr> ps;
    for (const auto& l : layers) {
      ps.push_back(l.weights);
      ps.push_back(l.bias);
    }
    return ps;
  }
};

/// Glorot-uniform weights, zero bias. Hidden layers get `hidden` activation,
/// the last layer `output`.
inline Mlp init_params(const std::vector<std::size_t>& sizes, std::uint64_t seed,
                       Activation hidden = Activation::relu,
                       Activation output = Activation::identity) {
  if (sizes.size() < 2)
    throw std::invalid_argument("init_params: need at least [in, out]");
  for (auto s : sizes)
    if (s == 0) throw std::invalid_argument("init_params: zero layer size");
  Rng rng(seed);
  Mlp net;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t fan_in = sizes[i], fan_out = sizes[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (auto& x : w.data) x = rng.uniform(-a, a);
    LinearLayer layer;
    layer.weights = ad::make_leaf(std::move(w), true);
    layer.bias = ad::make_leaf(Tensor({1, fan_out}), true);
    layer.activation = (i + 2 == sizes.size()) ? output : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline ad::NodePtr forward_mlp(const Mlp& net, const ad::NodePtr& x) {
  if (net.layers.empty()) throw std::invalid_argument("forward_mlp: empty net");
  ad::NodePtr h = x;
  for (const auto& layer : net.layers) {
    h = ad::add(ad::matmul(h, layer.weights), layer.bias);
    switch (layer.activation) {
      case Activation::identity: break;
      case Activation::relu: h = ad::relu(h); break;
      case Activation::sigmoid: h = ad::sigmoid(h); break;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Adam with cosine-decayed learning rate.
// ---------------------------------------------------------------------------

struct AdamState {
  std::size_t step_count = 0;
  std::size_t total_steps = 1;
  double max_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState create(const std::vector<ad::NodePtr>& params,
                          double max_lr, std::size_t total_steps) {
    AdamState st;
    st.max_lr = max_lr;
    st.total_steps = total_steps;
    for (const auto& p : params) {
      st.first_moment.emplace_back(p->value.shape);
      st.second_moment.emplace_back(p->value.shape);
    }
    return st;
  }

  double current_lr() const {
    const double p =
        static_cast<double>(step_count) / static_cast<double>(total_steps);
    return 0.5 * max_lr * (1.0 + std::cos(3.14159265358979323846 * p));
  }
};

inline void adam_step(const std::vector<ad::NodePtr>& params, AdamState& state) {
  if (params.size() != state.first_moment.size())
    throw std::invalid_argument("adam_step: parameter count mismatch");
  if (state.step_count >= state.total_steps)
    throw std::logic_error("adam_step: schedule exhausted");
  const double lr = state.current_lr();
  const double t = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Node& p = *params[i];
    p.ensure_grad();
    if (!p.grad.same_shape(state.first_moment[i]))
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad.data[j];
      double& m = state.first_moment[i].data[j];
      double& v = state.second_moment[i].data[j];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      p.value.data[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + state.epsilon);
    }
  }
  ++state.step_count;
}

inline void zero_grads(const std::vector<ad::NodePtr>& params) {
  for (const auto& p : params) {
    p->ensure_grad();
    p->zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Flat binary snapshots: magic "DDAM", version u32, then per tensor
// (u32 name length, name bytes, u32 rank, u64 dims, f64 values), little-endian.
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits;
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    std::memcpy(&bits, &v, 8);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
bool read_le(std::istream& is, T& out) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) return false;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    std::memcpy(&out, &bits, 8);
  } else {
    out = static_cast<T>(bits);
  }
  return true;
}

}  // namespace detail

inline void save_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, Tensor>>& named) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_tensors: cannot open " + path);
  os.write("DDAM", 4);
  detail::write_le<std::uint32_t>(os, 1);
  for (const auto& [name, t] : named) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::write_le<std::uint64_t>(os, d);
    for (double v : t.data) detail::write_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("save_tensors: write failed for " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_tensors(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tensors: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "DDAM")
    throw std::runtime_error("load_tensors: bad magic in " + path);
  std::uint32_t version = 0;
  if (!detail::read_le(is, version) || version != 1)
    throw std::runtime_error("load_tensors: unsupported version in " + path);
  std::vector<std::pair<std::string, Tensor>> out;
  std::uint32_t name_len = 0;
  while (detail::read_le(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("load_tensors: truncated name in " + path);
    std::uint32_t rank = 0;
    if (!detail::read_le(is, rank))
      throw std::runtime_error("load_tensors: truncated rank in " + path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::read_le(is, v))
        throw std::runtime_error("load_tensors: truncated dims in " + path);
      d = static_cast<std::size_t>(v);
    }
    Tensor t(shape);
    for (auto& v : t.data)
      if (!detail::read_le(is, v))
        throw std::runtime_error("load_tensors: truncated data in " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace dfda::nn
