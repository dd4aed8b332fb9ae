#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dfda/metrics.hpp"
#include "dfda/rng.hpp"

using namespace dfda;
using namespace dfda::metrics;

namespace {

// Brute-force oracle: every metric from raw confusion counts, written
// independently of the implementation above.
MetricReport oracle_evaluate(const std::vector<double>& z,
                             const std::vector<int>& y, std::size_t n,
                             std::size_t C, double tau) {
  MetricReport r;
  double sum_ap = 0, sum_p = 0, sum_r = 0;
  std::size_t active = 0, TP = 0, FP = 0, FN = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = z[i * C + c] > tau;
      const bool truth = y[i * C + c] == 1;
      pos += truth;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    TP += tp;
    FP += fp;
    FN += fn;
    if (pos == 0) continue;
    ++active;
    // AP by explicit rank enumeration with stable tie order
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < n; ++i) ranked.push_back({z[i * C + c], i});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](auto& a, auto& b) { return a.first > b.first; });
    double ap = 0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (y[ranked[k].second * C + c] == 1) {
        ++hits;
        ap += double(hits) / double(k + 1);
      }
    sum_ap += ap / double(pos);
    sum_p += (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
    sum_r += double(tp) / double(pos);
  }
  r.map = sum_ap / double(active);
  r.cp = sum_p / double(active);
  r.cr = sum_r / double(active);
  r.cf1 = (r.cp + r.cr) > 0 ? 2 * r.cp * r.cr / (r.cp + r.cr) : 0.0;
  r.op = (TP + FP) ? double(TP) / double(TP + FP) : 0.0;
  r.or_ = (TP + FN) ? double(TP) / double(TP + FN) : 0.0;
  r.of1 = (r.op + r.or_) > 0 ? 2 * r.op * r.or_ / (r.op + r.or_) : 0.0;
  return r;
}

}  // namespace

TEST_CASE("average_precision") {
  SECTION("worked three-element example") {
    REQUIRE(average_precision({0.9, 0.8, 0.1}, {1, 0, 1}) ==
            Catch::Approx(5.0 / 6.0));
  }
  SECTION("perfect ranking") {
    REQUIRE(average_precision({0.9, 0.8, 0.7, 0.1}, {1, 1, 0, 0}) == 1.0);
  }
  SECTION("all positives score 1 regardless of order") {
    REQUIRE(average_precision({0.2, 0.9, 0.5}, {1, 1, 1}) == 1.0);
  }
  SECTION("no positives rejected") {
    REQUIRE_THROWS_AS(average_precision({0.5}, {0}), std::invalid_argument);
  }
  SECTION("invariant under strictly monotone score transforms") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> s(12);
      std::vector<int> y(12);
      int pos = 0;
      for (std::size_t i = 0; i < 12; ++i) {
        s[i] = rng.uniform();
        y[i] = rng.uniform() < 0.4 ? 1 : 0;
        pos += y[i];
      }
      if (pos == 0) y[0] = 1;
      std::vector<double> cubed(12);
      for (std::size_t i = 0; i < 12; ++i) cubed[i] = s[i] * s[i] * s[i];
      REQUIRE(average_precision(s, y) ==
              Catch::Approx(average_precision(cubed, y)));
    }
  }
}

TEST_CASE("evaluate") {
  SECTION("predictions equal to labels give all ones") {
    std::vector<int> y{1, 0, 1, 0, 1, 1, 0, 0, 1};
    std::vector<double> z(y.begin(), y.end());
    auto r = evaluate(z, y, 3, 3, 0.5);
    REQUIRE(r.map == 1.0);
    REQUIRE(r.cp == 1.0);
    REQUIRE(r.cr == 1.0);
    REQUIRE(r.cf1 == 1.0);
    REQUIRE(r.op == 1.0);
    REQUIRE(r.or_ == 1.0);
    REQUIRE(r.of1 == 1.0);
  }
  SECTION("all-zero predictions zero out recall") {
    std::vector<int> y{1, 0, 0, 1};
    std::vector<double> z(4, 0.0);
    auto r = evaluate(z, y, 2, 2, 0.5);
    REQUIRE(r.or_ == 0.0);
    REQUIRE(r.of1 == 0.0);
  }
  SECTION("seeded fixture matches the brute-force oracle exactly") {
    Rng rng(2718);
    const std::size_t B = 8, C = 3;
    std::vector<double> z(B * C);
    std::vector<int> y(B * C);
    for (std::size_t i = 0; i < B; ++i) {
      int pos = 0;
      for (std::size_t c = 0; c < C; ++c) {
        z[i * C + c] = rng.uniform();
        y[i * C + c] = rng.uniform() < 0.4 ? 1 : 0;
        pos += y[i * C + c];
      }
      if (pos == 0) y[i * C] = 1;
    }
    auto got = evaluate(z, y, B, C, 0.5);
    auto want = oracle_evaluate(z, y, B, C, 0.5);
    REQUIRE(got.map == want.map);
    REQUIRE(got.cp == want.cp);
    REQUIRE(got.cr == want.cr);
    REQUIRE(got.cf1 == want.cf1);
    REQUIRE(got.op == want.op);
    REQUIRE(got.or_ == want.or_);
    REQUIRE(got.of1 == want.of1);
  }
  SECTION("micro consistency identity on a fixture") {
    std::vector<int> y{1, 0, 1, 1, 0, 0, 1, 1};
    std::vector<double> z{0.9, 0.2, 0.8, 0.6, 0.4, 0.1, 0.7, 0.3};
    auto r = evaluate(z, y, 4, 2, 0.5);
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      if (z[i] > 0.5) {
        ++predicted;
        tp += y[i];
      }
    }
    REQUIRE(r.op * double(predicted) == Catch::Approx(double(tp)));
  }
  SECTION("error when no class has positives") {
    std::vector<int> y(4, 0);
    std::vector<double> z(4, 0.5);
    REQUIRE_THROWS_AS(evaluate(z, y, 2, 2, 0.5), std::invalid_argument);
  }
  SECTION("invalid tau rejected") {
    std::vector<int> y{1, 0};
    std::vector<double> z{0.6, 0.3};
    REQUIRE_THROWS_AS(evaluate(z, y, 1, 2, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(evaluate(z, y, 1, 2, 1.0), std::invalid_argument);
  }
}

TEST_CASE("prediction_histogram") {
  SECTION("single value fills one bin") {
    auto h = prediction_histogram(std::vector<double>(17, 0.5));
    std::size_t nonzero = 0;
    for (auto c : h.counts) nonzero += c > 0;
    REQUIRE(nonzero == 1);
    REQUIRE(h.counts[25] == 17);
  }
  SECTION("0 and 1 land in the first and last bins") {
    auto h = prediction_histogram({0.0, 1.0});
    REQUIRE(h.counts[0] == 1);
    REQUIRE(h.counts[49] == 1);
  }
  SECTION("counts conserve the total") {
    Rng rng(4);
    std::vector<double> z(1000);
    for (auto& v : z) v = rng.uniform();
    auto h = prediction_histogram(z);
    std::size_t total = 0;
    for (auto c : h.counts) total += c;
    REQUIRE(total == 1000);
  }
  SECTION("out-of-range rejected") {
    REQUIRE_THROWS_AS(prediction_histogram({1.5}), std::invalid_argument);
  }
}
