#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dfda::metrics {

struct MetricReport {
  double map = 0.0;
  double cp = 0.0, cr = 0.0, cf1 = 0.0;
  double op = 0.0, or_ = 0.0, of1 = 0.0;
};

struct Histogram {
  std::array<double, 51> bin_edges{};
  std::array<std::size_t, 50> counts{};
};

/// Non-interpolated rank-based average precision. Ties broken by original
/// index ascending.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: size mismatch");
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += static_cast<std::size_t>(y);
  if (n_pos == 0)
    throw std::invalid_argument("average_precision: no positive labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(n_pos);
}

inline double f1_of(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// The seven-metric report. Classes without a positive ground-truth label are
/// excluded from mAP and the macro averages; micro metrics pool TP/FP/FN
/// across all classes.
inline MetricReport evaluate(const std::vector<double>& predictions,
                             const std::vector<int>& labels, std::size_t n,
                             std::size_t C, double tau) {
  if (predictions.size() != n * C || labels.size() != n * C)
    throw std::invalid_argument("evaluate: shape mismatch");
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("evaluate: tau must be in (0,1)");

  MetricReport rep;
  double sum_ap = 0.0, sum_p = 0.0, sum_r = 0.0;
  std::size_t active = 0;
  std::size_t pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
    std::vector<double> scores(n);
    std::vector<int> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = predictions[i * C + c];
      ys[i] = labels[i * C + c];
      pos += static_cast<std::size_t>(ys[i]);
      const bool pred = scores[i] > tau;
      if (pred && ys[i]) ++tp;
      if (pred && !ys[i]) ++fp;
      if (!pred && ys[i]) ++fn;
    }
    pooled_tp += tp;
    pooled_fp += fp;
    pooled_fn += fn;
    if (pos == 0) continue;  // class absent from the ground truth
    ++active;
    sum_ap += average_precision(scores, ys);
    sum_p += (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                           : 0.0;
    sum_r += static_cast<double>(tp) / static_cast<double>(pos);
  }
  if (active == 0)
    throw std::invalid_argument("evaluate: no class has a positive label");

  rep.map = sum_ap / static_cast<double>(active);
  rep.cp = sum_p / static_cast<double>(active);
  rep.cr = sum_r / static_cast<double>(active);
  rep.cf1 = f1_of(rep.cp, rep.cr);
  rep.op = (pooled_tp + pooled_fp) > 0
               ? static_cast<double>(pooled_tp) /
                     static_cast<double>(pooled_tp + pooled_fp)
               : 0.0;
  rep.or_ = (pooled_tp + pooled_fn) > 0
                ? static_cast<double>(pooled_tp) /
                      static_cast<double>(pooled_tp + pooled_fn)
                : 0.0;
  rep.of1 = f1_of(rep.op, rep.or_);
  return rep;
}

/// 50 uniform bins on [0,1]; the value 1.0 lands in the last bin.
inline Histogram prediction_histogram(const std::vector<double>& z) {
  Histogram h;
  for (std::size_t i = 0; i < 51; ++i)
    h.bin_edges[i] = static_cast<double>(i) / 50.0;
  for (double v : z) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("prediction_histogram: value outside [0,1]");
    auto idx = static_cast<std::size_t>(v * 50.0);
    if (idx > 49) idx = 49;
    ++h.counts[idx];
  }
  return h;
}

}  // namespace dfda::metrics
