#pragma once

// Signal front-ends: image pixel mapping, and the speech path
// waveform -> STFT -> mel -> normalized log-magnitude, with its inverse.

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentcodec/bundle.hpp"

namespace latentcodec {

// ---- images ---------------------------------------------------------------

struct Image8 {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

/// C x H x W tensor with p -> p / 127.5 - 1.
inline Tensor image_to_tensor(const Image8& im) {
  std::vector<double> v(im.pixels.size());
  for (std::size_t c = 0; c < im.channels; ++c)
    for (std::size_t y = 0; y < im.height; ++y)
      for (std::size_t x = 0; x < im.width; ++x)
        v[(c * im.height + y) * im.width + x] =
            static_cast<double>(im.pixels[(y * im.width + x) * im.channels + c]) / 127.5 - 1.0;
  return Tensor(Shape{im.channels, im.height, im.width}, std::move(v));
}

inline std::uint8_t to_pixel(double v) {
  double p = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

inline Image8 tensor_to_image(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("image tensor must be C x H x W");
  Image8 im{t.dim(2), t.dim(1), t.dim(0), std::vector<std::uint8_t>(t.numel())};
  for (std::size_t c = 0; c < im.channels; ++c)
    for (std::size_t y = 0; y < im.height; ++y)
      for (std::size_t x = 0; x < im.width; ++x)
        im.pixels[(y * im.width + x) * im.channels + c] = to_pixel(t[(c * im.height + y) * im.width + x]);
  return im;
}

// ---- speech constants -----------------------------------------------------

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kFrameSize = 512;
inline constexpr std::size_t kHop = 128;
inline constexpr std::size_t kPad = 192;
inline constexpr std::size_t kBins = kFrameSize / 2 + 1;  // 257
inline constexpr std::size_t kMelBins = 128;
inline constexpr std::size_t kSegmentSamples = 16384;  // 1.024 s -> 128 frames
inline constexpr std::size_t kSegmentFrames = 128;
inline constexpr double kMelEpsilon = 1e-5;
inline constexpr double kMelMaxHz = 8000.0;
inline constexpr std::size_t kGriffinLimIters = 60;
inline constexpr double kGriffinLimMomentum = 0.99;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

using Complex = std::complex<double>;

/// frames x 257 complex bins, row-major.
struct Spectrogram {
  std::size_t frames = 0;
  std::vector<Complex> values;

  Complex& at(std::size_t f, std::size_t b) { return values[f * kBins + b]; }
  const Complex& at(std::size_t f, std::size_t b) const { return values[f * kBins + b]; }
  std::vector<double> magnitudes() const {
    std::vector<double> m(values.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::abs(values[i]);
    return m;
  }
};

inline std::size_t stft_frame_count(std::size_t length) {
  const std::size_t padded = length + 2 * kPad;
  return padded < kFrameSize ? 0 : (padded - kFrameSize) / kHop + 1;
}

/// Periodic Hann window of the frame size.
inline const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFrameSize);
    for (std::size_t i = 0; i < kFrameSize; ++i)
      v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / kFrameSize);
    return v;
  }();
  return w;
}

namespace detail {

/// Mirror index without repeating the edge sample, folded as often as needed.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - m);
}

struct FftPlans {
  fftw_plan forward = nullptr, inverse = nullptr;
  FftPlans() {
    double* r = fftw_alloc_real(kFrameSize);
    fftw_complex* c = fftw_alloc_complex(kBins);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(kFrameSize), r, c, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(kFrameSize), c, r, FFTW_ESTIMATE);
    fftw_free(r);
    fftw_free(c);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;
};

/// Planning is not thread-safe in FFTW; executing a plan on fresh arrays is.
inline const FftPlans& fft_plans() {
  static std::mutex m;
  std::lock_guard<std::mutex> lock(m);
  static const FftPlans plans;
  return plans;
}

struct FftBuffers {
  double* real = fftw_alloc_real(kFrameSize);
  fftw_complex* spec = fftw_alloc_complex(kBins);
  FftBuffers() = default;
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
  ~FftBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
};

}  // namespace detail

/// Hann-windowed STFT, reflect-padded by 192 samples on each side.
inline Spectrogram stft(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("stft: empty input");
  const auto& plans = detail::fft_plans();
  const auto& w = hann_window();
  const std::size_t n = samples.size();
  Spectrogram s;
  s.frames = stft_frame_count(n);
  s.values.resize(s.frames * kBins);
  detail::FftBuffers buf;
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t i = 0; i < kFrameSize; ++i) {
      auto pos = static_cast<std::ptrdiff_t>(f * kHop + i) - static_cast<std::ptrdiff_t>(kPad);
      buf.real[i] = w[i] * samples[detail::reflect_index(pos, n)];
    }
    fftw_execute_dft_r2c(plans.forward, buf.real, buf.spec);
    for (std::size_t b = 0; b < kBins; ++b) s.at(f, b) = Complex(buf.spec[b][0], buf.spec[b][1]);
  }
  return s;
}

/// Weighted overlap-add inverse (Hann synthesis, normalized by the summed
/// squared window), trimmed back to `length` samples.
inline std::vector<double> istft(const Spectrogram& s, std::size_t length) {
  const auto& plans = detail::fft_plans();
  const auto& w = hann_window();
  const std::size_t total = (s.frames == 0 ? 0 : (s.frames - 1) * kHop + kFrameSize);
  std::vector<double> acc(std::max(total, length + 2 * kPad), 0.0), norm(acc.size(), 0.0);
  detail::FftBuffers buf;
  for (std::size_t f = 0; f < s.frames; ++f) {
    for (std::size_t b = 0; b < kBins; ++b) {
      buf.spec[b][0] = s.at(f, b).real();
      buf.spec[b][1] = (b == 0 || b == kBins - 1) ? 0.0 : s.at(f, b).imag();
    }
    fftw_execute_dft_c2r(plans.inverse, buf.spec, buf.real);
    for (std::size_t i = 0; i < kFrameSize; ++i) {
      acc[f * kHop + i] += w[i] * buf.real[i] / static_cast<double>(kFrameSize);
      norm[f * kHop + i] += w[i] * w[i];
    }
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    double d = norm[i + kPad];
    out[i] = d > 1e-10 ? acc[i + kPad] / d : 0.0;
  }
  return out;
}

// ---- mel filterbank -------------------------------------------------------

/// Fant's mel scale: 1000/ln 2 * ln(1 + f/1000).
inline double hz_to_mel(double hz) { return 1000.0 / std::numbers::ln2 * std::log1p(hz / 1000.0); }
inline double mel_to_hz(double mel) { return 1000.0 * std::expm1(mel * std::numbers::ln2 / 1000.0); }

/// 128 x 257 triangular filters spanning 0-8000 Hz, each scaled so its
/// largest sampled weight is 1.
inline const Eigen::MatrixXd& mel_filterbank() {
  static const Eigen::MatrixXd fb = [] {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(kMelBins, kBins);
    const double top = hz_to_mel(kMelMaxHz);
    std::vector<double> edges(kMelBins + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(kMelBins + 1));
    const double bin_hz = static_cast<double>(kSampleRate) / kFrameSize;
    for (std::size_t f = 0; f < kMelBins; ++f) {
      const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
      for (std::size_t b = 0; b < kBins; ++b) {
        double hz = static_cast<double>(b) * bin_hz, v = 0.0;
        if (hz > lo && hz <= mid) v = (hz - lo) / (mid - lo);
        else if (hz > mid && hz < hi) v = (hi - hz) / (hi - mid);
        m(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = v;
      }
      double peak = m.row(static_cast<Eigen::Index>(f)).maxCoeff();
      if (peak > 0) m.row(static_cast<Eigen::Index>(f)) /= peak;
    }
    return m;
  }();
  return fb;
}

/// Pseudo-inverse of the filterbank (257 x 128).
inline const Eigen::MatrixXd& mel_pseudo_inverse() {
  static const Eigen::MatrixXd pinv = mel_filterbank().completeOrthogonalDecomposition().pseudoInverse();
  return pinv;
}

/// frames x 257 magnitudes -> frames x 128 mel energies.
inline std::vector<double> mel_forward(std::span<const double> magnitudes) {
  if (magnitudes.size() % kBins != 0) throw std::invalid_argument("mel_forward: expected 257-bin frames");
  const std::size_t frames = magnitudes.size() / kBins;
  const auto& fb = mel_filterbank();
  std::vector<double> out(frames * kMelBins);
  for (std::size_t f = 0; f < frames; ++f) {
    Eigen::Map<const Eigen::VectorXd> mag(magnitudes.data() + f * kBins, kBins);
    Eigen::Map<Eigen::VectorXd>(out.data() + f * kMelBins, kMelBins) = fb * mag;
  }
  return out;
}

/// frames x 128 mel -> frames x 257 magnitudes, negatives clamped to 0.
inline std::vector<double> mel_inverse(std::span<const double> mel) {
  if (mel.size() % kMelBins != 0) throw std::invalid_argument("mel_inverse: expected 128-bin frames");
  const std::size_t frames = mel.size() / kMelBins;
  const auto& pinv = mel_pseudo_inverse();
  std::vector<double> out(frames * kBins);
  for (std::size_t f = 0; f < frames; ++f) {
    Eigen::Map<const Eigen::VectorXd> m(mel.data() + f * kMelBins, kMelBins);
    Eigen::Map<Eigen::VectorXd> o(out.data() + f * kBins, kBins);
    o = (pinv * m).cwiseMax(0.0);
  }
  return out;
}

// ---- log normalization ----------------------------------------------------

inline void check_norm(const NormConstants& c) {
  if (!(c.ceiling > c.floor)) throw std::invalid_argument("norm constants need ceiling > floor");
}

inline double log_normalize(double m, const NormConstants& c) {
  double x = 2.0 * (std::log10(m + kMelEpsilon) - c.floor) / (c.ceiling - c.floor) - 1.0;
  return std::clamp(x, -1.0, 1.0);
}

inline double denormalize(double x, const NormConstants& c) {
  double l = (x + 1.0) / 2.0 * (c.ceiling - c.floor) + c.floor;
  return std::max(0.0, std::pow(10.0, l) - kMelEpsilon);
}

/// Floor at log10(eps); ceiling at the largest log-mel value in the corpus.
inline NormConstants fit_norm_constants(std::span<const std::vector<double>> mels) {
  NormConstants c{std::log10(kMelEpsilon), std::log10(kMelEpsilon) + 1.0};
  for (const auto& m : mels)
    for (double v : m) c.ceiling = std::max(c.ceiling, std::log10(v + kMelEpsilon));
  return c;
}

/// Mel energies of one waveform segment (frames x 128).
inline std::vector<double> mel_energies(std::span<const double> samples) {
  return mel_forward(stft(samples).magnitudes());
}

/// 16384 samples -> 1 x 128 x 128 tensor: rows are mel bins, columns frames.
inline Tensor speech_features(std::span<const double> segment, const NormConstants& c) {
  check_norm(c);
  if (segment.size() != kSegmentSamples) throw ShapeError("speech segment must have 16384 samples");
  auto mel = mel_energies(segment);
  std::vector<double> v(kMelBins * kSegmentFrames);
  for (std::size_t f = 0; f < kSegmentFrames; ++f)
    for (std::size_t b = 0; b < kMelBins; ++b) v[b * kSegmentFrames + f] = log_normalize(mel[f * kMelBins + b], c);
  return Tensor(Shape{1, kMelBins, kSegmentFrames}, std::move(v));
}

/// Mel energies (frames x 128) from a normalized 1 x 128 x 128 tensor.
inline std::vector<double> features_to_mel(const Tensor& t, const NormConstants& c) {
  check_norm(c);
  if (t.shape() != Shape{1, kMelBins, kSegmentFrames}) throw ShapeError("speech features must be 1 x 128 x 128");
  std::vector<double> mel(kSegmentFrames * kMelBins);
  for (std::size_t f = 0; f < kSegmentFrames; ++f)
    for (std::size_t b = 0; b < kMelBins; ++b) mel[f * kMelBins + b] = denormalize(t[b * kSegmentFrames + f], c);
  return mel;
}

/// Phase recovery for a magnitude spectrogram: fast Griffin-Lim (momentum
/// `alpha`) from zero phase, then the inverse STFT.
inline std::vector<double> griffin_lim(std::span<const double> magnitudes, std::size_t frames, std::size_t length,
                                       std::size_t iters = kGriffinLimIters, double alpha = kGriffinLimMomentum) {
  if (magnitudes.size() != frames * kBins) throw std::invalid_argument("griffin_lim: size mismatch");
  Spectrogram target{frames, std::vector<Complex>(magnitudes.begin(), magnitudes.end())};
  Spectrogram t = target, prev = target;
  auto project_magnitude = [&](Spectrogram& s) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      double a = std::abs(s.values[i]);
      s.values[i] = a > 0 ? s.values[i] * (magnitudes[i] / a) : Complex(magnitudes[i], 0.0);
    }
  };
  for (std::size_t n = 0; n < iters; ++n) {
    Spectrogram c = stft(istft(t, length));
    project_magnitude(c);
    for (std::size_t i = 0; i < t.values.size(); ++i) t.values[i] = c.values[i] + alpha * (c.values[i] - prev.values[i]);
    prev = std::move(c);
  }
  return istft(prev, length);
}

/// Normalized 1 x 128 x 128 features -> 16384-sample waveform.
inline std::vector<double> invert_speech(const Tensor& features, const NormConstants& c) {
  auto mel = features_to_mel(features, c);
  auto mag = mel_inverse(mel);
  return griffin_lim(mag, kSegmentFrames, kSegmentSamples);
}

/// Consecutive 16384-sample segments; the last one is zero-padded.
inline std::vector<std::vector<double>> split_segments(std::span<const double> samples) {
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < samples.size(); start += kSegmentSamples) {
    std::vector<double> seg(kSegmentSamples, 0.0);
    std::size_t n = std::min(kSegmentSamples, samples.size() - start);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), n, seg.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace latentcodec
