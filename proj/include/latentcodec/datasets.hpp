#pragma once

// Training data: procedural shapes (images), harmonic tones (speech), or a
// directory of .pgm/.ppm or .wav files.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "latentcodec/io.hpp"
#include "latentcodec/pipelines.hpp"

namespace latentcodec {

struct Dataset {
  SignalKind signal = SignalKind::image;
  Shape shape;
  std::vector<Tensor> train, heldout;
  NormConstants norm;  // speech only; images keep the pixel range
  std::string source;
};

inline constexpr std::size_t kShapesSize = 32;

/// One 32x32 grayscale scene: flat background plus 1-3 rectangles/circles.
inline Tensor synthetic_shape(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = kShapesSize;
  std::vector<double> px(n * n, -0.8 + 0.6 * u(rng));
  int count = 1 + static_cast<int>(u(rng) * 3.0);
  for (int s = 0; s < count; ++s) {
    double level = -1.0 + 2.0 * u(rng);
    double cx = 4 + u(rng) * 24, cy = 4 + u(rng) * 24, r = 4 + u(rng) * 8;
    bool circle = u(rng) < 0.5;
    double hw = 3 + u(rng) * 9, hh = 3 + u(rng) * 9;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        bool inside = circle ? dx * dx + dy * dy <= r * r : std::abs(dx) <= hw && std::abs(dy) <= hh;
        if (inside) px[y * n + x] = level;
      }
  }
  return Tensor(Shape{1, n, n}, std::move(px));
}

/// 16384 samples of a decaying harmonic tone (100-300 Hz) with light noise.
inline std::vector<double> synthetic_tone(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  double f0 = 100 + 200 * u(rng), decay = 0.5 + 2.0 * u(rng), amp = 0.2 + 0.3 * u(rng);
  int harmonics = 1 + static_cast<int>(u(rng) * 4.0);
  double phase = 2 * std::numbers::pi * u(rng);
  std::vector<double> w(kSegmentSamples);
  for (std::size_t i = 0; i < w.size(); ++i) {
    double t = static_cast<double>(i) / kSampleRate, v = 0;
    for (int h = 1; h <= harmonics; ++h) v += std::sin(2 * std::numbers::pi * f0 * h * t + phase * h) / h;
    w[i] = std::clamp(amp * std::exp(-decay * t) * v / 1.5 + noise(rng), -1.0, 1.0);
  }
  return w;
}

namespace detail {

inline std::vector<double> mel_to_features(const std::vector<double>& mel, const NormConstants& c) {
  std::vector<double> v(kMelBins * kSegmentFrames);
  for (std::size_t f = 0; f < kSegmentFrames; ++f)
    for (std::size_t b = 0; b < kMelBins; ++b) v[b * kSegmentFrames + f] = log_normalize(mel[f * kMelBins + b], c);
  return v;
}

/// Speech features for the segments, with constants fitted on the training
/// ones unless `norm` is given.
inline void build_speech(Dataset& d, const std::vector<std::vector<double>>& train_wave,
                         const std::vector<std::vector<double>>& heldout_wave, const NormConstants* norm) {
  std::vector<std::vector<double>> train_mel, held_mel;
  for (const auto& w : train_wave) train_mel.push_back(mel_energies(w));
  for (const auto& w : heldout_wave) held_mel.push_back(mel_energies(w));
  d.norm = norm ? *norm : fit_norm_constants(train_mel);
  check_norm(d.norm);
  d.shape = {1, kMelBins, kSegmentFrames};
  for (const auto& m : train_mel) d.train.emplace_back(d.shape, mel_to_features(m, d.norm));
  for (const auto& m : held_mel) d.heldout.emplace_back(d.shape, mel_to_features(m, d.norm));
}

}  // namespace detail

/// "synthetic:shapes[:N]" or "synthetic:tones[:N]" (N training samples,
/// default `train_count`), or a directory path. Held-out synthetic samples
/// come from a separate seed stream; a directory holds out every fifth file.
/// Speech features use `norm` when given (e.g. a trained bundle's).
inline Dataset load_dataset(const std::string& spec, std::size_t train_count, std::size_t heldout_count,
                            std::uint64_t seed, const NormConstants* norm = nullptr) {
  Dataset d;
  d.source = spec;
  if (spec.rfind("synthetic:", 0) == 0) {
    std::string rest = spec.substr(10), kind = rest;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
      kind = rest.substr(0, colon);
      try {
        train_count = std::stoul(rest.substr(colon + 1));
      } catch (const std::exception&) {
        throw std::invalid_argument("bad synthetic dataset size in '" + spec + "'");
      }
    }
    if (train_count == 0) throw std::invalid_argument("empty dataset");
    std::mt19937_64 train_rng(seed), held_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    if (kind == "shapes") {
      d.signal = SignalKind::image;
      d.shape = {1, kShapesSize, kShapesSize};
      for (std::size_t i = 0; i < train_count; ++i) d.train.push_back(synthetic_shape(train_rng));
      for (std::size_t i = 0; i < heldout_count; ++i) d.heldout.push_back(synthetic_shape(held_rng));
    } else if (kind == "tones") {
      d.signal = SignalKind::speech;
      std::vector<std::vector<double>> tw, hw;
      for (std::size_t i = 0; i < train_count; ++i) tw.push_back(synthetic_tone(train_rng));
      for (std::size_t i = 0; i < heldout_count; ++i) hw.push_back(synthetic_tone(held_rng));
      detail::build_speech(d, tw, hw, norm);
    } else {
      throw std::invalid_argument("unknown synthetic dataset '" + kind + "' (shapes or tones)");
    }
    if (d.heldout.empty()) d.heldout = d.train;
    return d;
  }

  namespace fs = std::filesystem;
  if (!fs::is_directory(spec)) throw std::invalid_argument("dataset directory not found: " + spec);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(spec))
    if (e.is_regular_file() && (is_image_path(e.path()) || is_wav_path(e.path()))) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::invalid_argument("empty dataset: no .pgm/.ppm/.wav files in " + spec);
  const bool images = is_image_path(files.front());
  for (const auto& f : files)
    if (is_image_path(f) != images) throw std::invalid_argument("dataset mixes images and audio");
  auto held = [&](std::size_t i) { return files.size() >= 5 && i % 5 == 4; };

  if (images) {
    d.signal = SignalKind::image;
    for (std::size_t i = 0; i < files.size(); ++i) {
      Tensor t = image_to_tensor(load_image(files[i]));
      if (d.shape.empty()) {
        d.shape = t.shape();
        if (d.shape[1] != d.shape[2] || d.shape[1] % 32 != 0)
          throw ShapeError("images must be square with a side that is a multiple of 32");
      } else if (t.shape() != d.shape) {
        throw ShapeError("image " + files[i].string() + " has shape " + to_string(t.shape()));
      }
      (held(i) ? d.heldout : d.train).push_back(std::move(t));
    }
  } else {
    d.signal = SignalKind::speech;
    std::vector<std::vector<double>> tw, hw;
    for (std::size_t i = 0; i < files.size(); ++i)
      for (auto& seg : split_segments(load_wav(files[i]).samples)) (held(i) ? hw : tw).push_back(std::move(seg));
    detail::build_speech(d, tw, hw, norm);
  }
  if (d.heldout.empty()) d.heldout = d.train;
  return d;
}

}  // namespace latentcodec
