#pragma once

// Non-uniform scalar quantization: 1-D K-means codebooks and nearest-center
// projection onto the codebook set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentcodec {

class QuantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SourceStats {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
};

struct Codebook {
  std::vector<double> centers;  // strictly ascending
  SourceStats source_stats;

  std::size_t k() const { return centers.size(); }

  /// Throws unless centers are finite, strictly ascending, and k is a power
  /// of two in [2, 256].
  void validate() const {
    const std::size_t n = centers.size();
    if (n < 2 || n > 256 || (n & (n - 1)) != 0) {
      throw QuantError("codebook size must be a power of two in [2, 256], got " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(centers[i])) throw QuantError("codebook center is not finite");
      if (i > 0 && !(centers[i - 1] < centers[i])) {
        throw QuantError("codebook centers must be strictly ascending");
      }
    }
  }

  /// Centers rounded to float32 (the serialized precision).
  Codebook to_float32() const {
    Codebook out = *this;
    for (double& c : out.centers) c = static_cast<double>(static_cast<float>(c));
    out.validate();
    return out;
  }

  bool operator==(const Codebook& o) const { return centers == o.centers; }
};

struct Quantized {
  std::vector<double> values;
  std::vector<std::uint8_t> indices;
};

namespace detail {

/// Index of the nearest center; ties go to the lower index.
inline std::size_t nearest_center(std::span<const double> centers, double z) {
  auto it = std::lower_bound(centers.begin(), centers.end(), z);
  std::size_t hi = static_cast<std::size_t>(it - centers.begin());
  if (hi == 0) return 0;
  if (hi == centers.size()) return centers.size() - 1;
  std::size_t lo = hi - 1;
  return std::abs(z - centers[lo]) <= std::abs(centers[hi] - z) ? lo : hi;
}

}  // namespace detail

inline Quantized quantize_project(std::span<const double> z, const Codebook& cb) {
  Quantized q;
  q.values.resize(z.size());
  q.indices.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::size_t idx = detail::nearest_center(cb.centers, z[i]);
    q.indices[i] = static_cast<std::uint8_t>(idx);
    q.values[i] = cb.centers[idx];
  }
  return q;
}

inline std::vector<double> dequantize(std::span<const std::uint8_t> indices, const Codebook& cb) {
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= cb.k()) {
      throw QuantError("symbol index " + std::to_string(indices[i]) + " out of range for k=" +
                       std::to_string(cb.k()));
    }
    out[i] = cb.centers[indices[i]];
  }
  return out;
}

/// Mean squared distance to the nearest center.
inline double distortion(std::span<const double> samples, const Codebook& cb) {
  double s = 0.0;
  for (double x : samples) {
    double c = cb.centers[detail::nearest_center(cb.centers, x)];
    s += (x - c) * (x - c);
  }
  return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
}

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  // Receives the within-cluster distortion after every assignment step.
  std::vector<double>* distortion_trace = nullptr;
};

/// 1-D K-means with k-means++ seeding. Every returned center is the mean of
/// the samples assigned to it.
inline Codebook fit_codebook(std::span<const double> samples, std::size_t k, std::uint64_t seed,
                             const KMeansOptions& opts = {}) {
  if (k < 2 || k > 256 || (k & (k - 1)) != 0) {
    throw QuantError("k must be a power of two in [2, 256], got " + std::to_string(k));
  }
  if (samples.size() < k) throw QuantError("fewer samples than codebook levels");
  for (double x : samples) {
    if (!std::isfinite(x)) throw QuantError("non-finite sample");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t distinct = std::unique(sorted.begin(), sorted.end()) - sorted.begin();
  if (distinct < k) {
    throw QuantError("only " + std::to_string(distinct) + " distinct samples for k=" +
                     std::to_string(k));
  }
  const std::size_t n = samples.size();

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<double> centers;
  centers.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (samples[i] - centers[0]) * (samples[i] - centers[0]);
  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (double acc = 0.0; pick < n; ++pick) {
      acc += d2[pick];
      if (acc > r && d2[pick] > 0.0) break;
    }
    if (pick == n) {  // rounding at the tail; take the farthest sample
      pick = std::max_element(d2.begin(), d2.end()) - d2.begin();
    }
    double c = samples[pick];
    centers.push_back(c);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (samples[i] - c) * (samples[i] - c));
  }
  std::sort(centers.begin(), centers.end());

  std::vector<std::size_t> assign(n);
  std::vector<double> sums(k);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    double dist = 0.0;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = detail::nearest_center(centers, samples[i]);
      double e = samples[i] - centers[assign[i]];
      dist += e * e;
      sums[assign[i]] += samples[i];
      ++counts[assign[i]];
    }
    if (opts.distortion_trace) opts.distortion_trace->push_back(dist / static_cast<double>(n));

    std::vector<double> next(k);
    for (std::size_t j = 0; j < k; ++j) next[j] = counts[j] ? sums[j] / static_cast<double>(counts[j]) : centers[j];
    // Empty-cluster repair: the sample farthest from its center seeds the cluster.
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j]) continue;
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double e = std::abs(samples[i] - next[assign[i]]);
        if (e > best && std::find(next.begin(), next.end(), samples[i]) == next.end()) {
          best = e;
          far = i;
        }
      }
      next[j] = samples[far];
    }
    std::sort(next.begin(), next.end());
    double moved = 0.0;
    for (std::size_t j = 0; j < k; ++j) moved = std::max(moved, std::abs(next[j] - centers[j]));
    centers = std::move(next);
    if (moved < opts.tol) break;
  }

  // Final mean step so every center is exactly the mean of its members.
  std::fill(sums.begin(), sums.end(), 0.0);
  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = detail::nearest_center(centers, samples[i]);
    sums[a] += samples[i];
    ++counts[a];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j]) centers[j] = sums[j] / static_cast<double>(counts[j]);
  }

  Codebook cb;
  cb.centers = std::move(centers);
  double mean = 0.0, m2 = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(n);
  for (double x : samples) m2 += (x - mean) * (x - mean);
  cb.source_stats = {n, mean, m2 / static_cast<double>(n)};
  cb.validate();
  return cb;
}

}  // namespace latentcodec
