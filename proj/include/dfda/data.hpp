#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfda/rng.hpp"
#include "dfda/tensor.hpp"

namespace dfda::data {

enum class Domain { source, target };

struct MultiLabelDataset {
  std::size_t n = 0, d = 0, C = 0;
  std::vector<double> features;  // n x d row-major
  std::vector<int> labels;       // n x C row-major, {0,1}
  Domain domain_tag = Domain::source;

  double feature(std::size_t i, std::size_t j) const { return features[i * d + j]; }
  int label(std::size_t i, std::size_t c) const { return labels[i * C + c]; }
};

struct ShiftSpec {
  double rotation_angle = 0.5;  // radians, applied in the first two coords
  std::vector<double> translation;  // d-vector; empty means zero
  double scale = 1.3;
  double noise_sigma_source = 0.05;
  double noise_sigma_target = 0.15;

  static ShiftSpec identity() {
    ShiftSpec s;
    s.rotation_angle = 0.0;
    s.scale = 1.0;
    s.noise_sigma_target = s.noise_sigma_source;
    return s;
  }
};

struct Batch {
  Tensor features;          // B x d
  std::vector<int> labels;  // B x C, empty for unlabeled target batches
  std::size_t size() const { return features.rows(); }
};

/// Synthetic multi-label pair with a purely covariate shift: shared class
/// prototypes on the unit sphere, target features rotated / scaled /
/// translated and noised harder.
inline std::pair<MultiLabelDataset, MultiLabelDataset> generate_pair(
    std::uint64_t seed, std::size_t n_per_domain, std::size_t d, std::size_t C,
    const ShiftSpec& shift) {
  if (n_per_domain < 1 || d < 1 || C < 2)
    throw std::invalid_argument("generate_pair: invalid dimensions");
  if (!(shift.scale > 0.0))
    throw std::invalid_argument("generate_pair: scale must be positive");
  if (!shift.translation.empty() && shift.translation.size() != d)
    throw std::invalid_argument("generate_pair: translation dim != d");

  Rng rng(seed);
  // Class prototypes on the unit sphere.
  std::vector<double> protos(C * d);
  for (std::size_t c = 0; c < C; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      protos[c * d + j] = rng.normal();
      norm += protos[c * d + j] * protos[c * d + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) protos[c * d + j] /= norm;
  }

  const double p_pos = 2.0 / static_cast<double>(C);
  const double cos_a = std::cos(shift.rotation_angle);
  const double sin_a = std::sin(shift.rotation_angle);

  auto make = [&](Domain dom) {
    MultiLabelDataset ds;
    ds.n = n_per_domain;
    ds.d = d;
    ds.C = C;
    ds.domain_tag = dom;
    ds.features.resize(n_per_domain * d);
    ds.labels.resize(n_per_domain * C);
    const double noise = dom == Domain::source ? shift.noise_sigma_source
                                               : shift.noise_sigma_target;
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      // Label subset, redrawn until nonempty.
      std::size_t positives = 0;
      do {
        positives = 0;
        for (std::size_t c = 0; c < C; ++c) {
          const int y = rng.uniform() < p_pos ? 1 : 0;
          ds.labels[i * C + c] = y;
          positives += static_cast<std::size_t>(y);
        }
      } while (positives == 0);

      std::vector<double> f(d, 0.0);
      for (std::size_t c = 0; c < C; ++c)
        if (ds.labels[i * C + c])
          for (std::size_t j = 0; j < d; ++j) f[j] += protos[c * d + j];
      double norm = 0.0;
      for (double v : f) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (auto& v : f) v /= norm;

      if (dom == Domain::target) {
        const double f0 = f[0];
        const double f1 = d > 1 ? f[1] : 0.0;
        f[0] = cos_a * f0 - sin_a * f1;
        if (d > 1) f[1] = sin_a * f0 + cos_a * f1;
        for (auto& v : f) v *= shift.scale;
        if (!shift.translation.empty())
          for (std::size_t j = 0; j < d; ++j) f[j] += shift.translation[j];
      }
      for (std::size_t j = 0; j < d; ++j)
        ds.features[i * d + j] = f[j] + noise * rng.normal();
    }
    return ds;
  };

  MultiLabelDataset src = make(Domain::source);
  MultiLabelDataset tgt = make(Domain::target);
  return {std::move(src), std::move(tgt)};
}

// ---------------------------------------------------------------------------
// CSV: header feature_0..feature_{d-1},label_0..label_{C-1}.
// ---------------------------------------------------------------------------

inline void save_csv(const MultiLabelDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < ds.d; ++j) os << "feature_" << j << ",";
  for (std::size_t c = 0; c < ds.C; ++c)
    os << "label_" << c << (c + 1 < ds.C ? "," : "\n");
  char buf[40];
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.feature(i, j));
      os << buf << ",";
    }
    for (std::size_t c = 0; c < ds.C; ++c)
      os << ds.label(i, c) << (c + 1 < ds.C ? "," : "\n");
  }
  if (!os) throw std::runtime_error("save_csv: write failed for " + path);
}

inline MultiLabelDataset load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.empty())
    throw std::runtime_error("load_csv: no rows in " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  std::size_t d = 0, C = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::string expect_f = "feature_" + std::to_string(i);
    const std::string expect_l = "label_" + std::to_string(i - d);
    if (C == 0 && cols[i] == expect_f) {
      ++d;
    } else if (cols[i] == expect_l) {
      ++C;
    } else {
      throw std::runtime_error("load_csv: unexpected column '" + cols[i] +
                               "' at position " + std::to_string(i));
    }
  }
  if (d == 0 || C == 0)
    throw std::runtime_error("load_csv: header must contain feature_* then label_*");

  MultiLabelDataset ds;
  ds.d = d;
  ds.C = C;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ss, tok, ',')) toks.push_back(tok);
    if (toks.size() != d + C)
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(d + C) +
                               " fields, got " + std::to_string(toks.size()));
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(toks[j], &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                 ": bad number '" + toks[j] + "'");
      }
      if (pos != toks[j].size())
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                 ": bad number '" + toks[j] + "'");
      ds.features.push_back(v);
    }
    for (std::size_t c = 0; c < C; ++c) {
      const std::string& t = toks[d + c];
      if (t != "0" && t != "1")
        throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                 ": label '" + t + "' not in {0,1}");
      ds.labels.push_back(t == "1" ? 1 : 0);
    }
    ++ds.n;
  }
  if (ds.n == 0) throw std::runtime_error("load_csv: no rows in " + path);
  return ds;
}

// ---------------------------------------------------------------------------
// Deterministic batching.
// ---------------------------------------------------------------------------

inline std::vector<Batch> batches(const MultiLabelDataset& ds,
                                  std::size_t batch_size, std::uint64_t seed,
                                  std::size_t epoch, bool with_labels = true) {
  if (batch_size < 2) throw std::invalid_argument("batches: batch_size < 2");
  std::vector<std::size_t> perm(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) perm[i] = i;
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  rng.shuffle(perm);

  std::vector<Batch> out;
  for (std::size_t start = 0; start < ds.n; start += batch_size) {
    const std::size_t b = std::min(batch_size, ds.n - start);
    if (b < 2) break;  // drop short tail
    Batch batch;
    batch.features = Tensor({b, ds.d});
    if (with_labels) batch.labels.resize(b * ds.C);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t row = perm[start + i];
      for (std::size_t j = 0; j < ds.d; ++j)
        batch.features.at(i, j) = ds.feature(row, j);
      if (with_labels)
        for (std::size_t c = 0; c < ds.C; ++c)
          batch.labels[i * ds.C + c] = ds.label(row, c);
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace dfda::data
