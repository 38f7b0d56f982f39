#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "latentcodec/quant.hpp"

using namespace latentcodec;

namespace {

// Optimal 1-D k-level quantizer via DP over sorted samples (contiguous
// clusters), with divide-and-conquer over the monotone split points.
double optimal_distortion(std::vector<double> x, std::size_t k) {
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + x[i];
    s2[i + 1] = s2[i] + x[i] * x[i];
  }
  auto cost = [&](std::size_t a, std::size_t b) {  // samples [a, b)
    double m = static_cast<double>(b - a);
    double s = s1[b] - s1[a];
    return (s2[b] - s2[a]) - s * s / m;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(n + 1, inf), cur(n + 1, inf);
  for (std::size_t b = 1; b <= n; ++b) prev[b] = cost(0, b);
  for (std::size_t j = 2; j <= k; ++j) {
    std::fill(cur.begin(), cur.end(), inf);
    auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t optlo, std::size_t opthi) -> void {
      if (lo > hi) return;
      std::size_t mid = (lo + hi) / 2, best = optlo;
      double bv = inf;
      for (std::size_t a = optlo; a <= std::min(mid - 1, opthi); ++a) {
        double v = prev[a] + cost(a, mid);
        if (v < bv) { bv = v; best = a; }
      }
      cur[mid] = bv;
      if (mid > lo) self(self, lo, mid - 1, optlo, best);
      self(self, mid + 1, hi, best, opthi);
    };
    solve(solve, j, n, j - 1, n - 1);
    std::swap(prev, cur);
  }
  return prev[n] / static_cast<double>(n);
}

}  // namespace

TEST(FitCodebook, TwoClustersMatchExhaustiveSplit) {
  std::vector<double> s{0, 1, 10, 11};
  // Exhaustive oracle: best of the 3 contiguous splits.
  double best = 1e300;
  std::vector<double> best_c;
  for (std::size_t cut = 1; cut < s.size(); ++cut) {
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < cut; ++i) m0 += s[i];
    for (std::size_t i = cut; i < s.size(); ++i) m1 += s[i];
    m0 /= cut;
    m1 /= (s.size() - cut);
    double d = 0;
    for (std::size_t i = 0; i < s.size(); ++i) d += std::pow(s[i] - (i < cut ? m0 : m1), 2);
    if (d < best) { best = d; best_c = {m0, m1}; }
  }
  auto cb = fit_codebook(s, 2, 7);
  ASSERT_EQ(cb.k(), 2u);
  EXPECT_EQ(cb.centers, best_c);
  EXPECT_EQ(cb.centers, (std::vector<double>{0.5, 10.5}));
}

TEST(FitCodebook, DistinctSamplesBecomeCenters) {
  std::vector<double> s{3.0, -1.0, 3.0, 0.25, 7.5, -1.0};
  auto cb = fit_codebook(s, 4, 1);
  EXPECT_EQ(cb.centers, (std::vector<double>{-1.0, 0.25, 3.0, 7.5}));
  EXPECT_EQ(distortion(s, cb), 0.0);
}

TEST(FitCodebook, NormalSamplesNearDpOptimum) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> s(10000);
  for (double& x : s) x = nd(rng);
  auto cb = fit_codebook(s, 16, 3);
  double opt = optimal_distortion(s, 16);
  double got = distortion(s, cb);
  EXPECT_GE(got, opt * (1 - 1e-9));
  EXPECT_LE(got, opt * 1.05) << "kmeans " << got << " vs optimum " << opt;
}

TEST(FitCodebook, Errors) {
  EXPECT_THROW(fit_codebook(std::vector<double>{1, 1, 2, 2}, 4, 0), QuantError);
  EXPECT_THROW(fit_codebook(std::vector<double>{1, 2, 3}, 4, 0), QuantError);
  EXPECT_THROW(fit_codebook(std::vector<double>{1, 2, 3, 4, 5, 6}, 3, 0), QuantError);
  EXPECT_THROW(fit_codebook(std::vector<double>{1}, 1, 0), QuantError);
}

TEST(FitCodebook, CentersAreMeansOfTheirMembersAndDeterministic) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> s(2000);
  for (double& x : s) x = u(rng) * u(rng);
  auto a = fit_codebook(s, 8, 99);
  auto b = fit_codebook(s, 8, 99);
  EXPECT_EQ(a.centers, b.centers);
  auto q = quantize_project(s, a);
  for (std::size_t j = 0; j < a.k(); ++j) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (q.indices[i] == j) { sum += s[i]; ++n; }
    ASSERT_GT(n, 0u);
    EXPECT_NEAR(a.centers[j], sum / n, 1e-6);
  }
  EXPECT_EQ(a.source_stats.count, s.size());
}

TEST(FitCodebook, LloydDistortionNonIncreasing) {
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> s(3000);
  for (double& x : s) x = ex(rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<double> trace;
    KMeansOptions opts;
    opts.distortion_trace = &trace;
    fit_codebook(s, 16, seed, opts);
    ASSERT_GE(trace.size(), 1u);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
  }
}

TEST(Quantize, NearestCenterExamples) {
  Codebook cb{{-1.0, 1.0}, {}};
  auto q = quantize_project(std::vector<double>{0.2, -3.0}, cb);
  EXPECT_EQ(q.values, (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(q.indices, (std::vector<std::uint8_t>{1, 0}));
  auto tie = quantize_project(std::vector<double>{0.0}, cb);
  EXPECT_EQ(tie.values[0], -1.0);
  EXPECT_EQ(tie.indices[0], 0);
}

TEST(Quantize, ProjectionIsOptimalAndIdempotent) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0, 2);
  Codebook cb;
  for (int i = 0; i < 16; ++i) cb.centers.push_back(-3.0 + 0.4 * i + 0.01 * i * i);
  cb.validate();
  std::vector<double> z(5000);
  for (double& x : z) x = nd(rng);
  auto q = quantize_project(z, cb);
  for (std::size_t i = 0; i < z.size(); ++i)
    for (double c : cb.centers) ASSERT_LE(std::abs(z[i] - q.values[i]), std::abs(z[i] - c));
  auto qq = quantize_project(q.values, cb);
  EXPECT_EQ(qq.values, q.values);
  EXPECT_EQ(qq.indices, q.indices);
}

TEST(Dequantize, LookupRoundTripAndBounds) {
  Codebook cb{{-1.0, 1.0}, {}};
  EXPECT_EQ(dequantize(std::vector<std::uint8_t>{0, 1}, cb), (std::vector<double>{-1.0, 1.0}));
  std::vector<double> z{0.3, -0.7, 5.0, -0.0};
  auto q = quantize_project(z, cb);
  EXPECT_EQ(dequantize(q.indices, cb), q.values);
  EXPECT_THROW(dequantize(std::vector<std::uint8_t>{2}, cb), QuantError);
}

TEST(Codebook, ValidationAndFloatRounding) {
  EXPECT_THROW((Codebook{{1.0, 1.0}, {}}.validate()), QuantError);
  EXPECT_THROW((Codebook{{0.0, 1.0, 2.0}, {}}.validate()), QuantError);
  auto f = Codebook{{0.1, 0.7}, {}}.to_float32();
  EXPECT_EQ(f.centers[0], static_cast<double>(0.1f));
}
