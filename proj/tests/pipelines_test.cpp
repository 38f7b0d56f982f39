#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "latentcodec/io.hpp"
#include "latentcodec/pipelines.hpp"

using namespace latentcodec;

namespace {

std::vector<double> sine(double hz, std::size_t n, double amp = 0.5) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate);
  return v;
}

std::vector<double> white_noise(std::size_t n, unsigned seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

NormConstants norm_for(const std::vector<double>& mel) {
  std::vector<std::vector<double>> corpus{mel};
  return fit_norm_constants(corpus);
}

}  // namespace

TEST(Stft, FrameCountMatchesNaiveFraming) {
  for (std::size_t len : {1u, 2u, 100u, 127u, 128u, 129u, 500u, 1000u, 4097u, 16384u, 20000u}) {
    std::size_t naive = 0;
    for (std::size_t start = 0; start + kFrameSize <= len + 2 * kPad; start += kHop) ++naive;
    EXPECT_EQ(stft_frame_count(len), naive) << len;
    EXPECT_EQ(stft(std::vector<double>(len, 0.1)).frames, naive) << len;
  }
  EXPECT_EQ(stft_frame_count(16384), 128u);
  EXPECT_THROW(stft(std::vector<double>{}), std::invalid_argument);
}

TEST(Stft, SinePeakAtExpectedBin) {
  auto s = stft(sine(1000.0, 16384));
  auto m = s.magnitudes();
  for (std::size_t f = 4; f < s.frames - 4; ++f) {
    std::size_t best = 0;
    for (std::size_t b = 0; b < kBins; ++b)
      if (m[f * kBins + b] > m[f * kBins + best]) best = b;
    EXPECT_EQ(best, 32u);
  }
}

TEST(Stft, ZeroInputAndDirectDft) {
  for (double v : stft(std::vector<double>(4000, 0.0)).magnitudes()) EXPECT_EQ(v, 0.0);
  // One frame against a direct DFT of the windowed, reflect-padded samples.
  auto x = white_noise(700, 9);
  auto s = stft(x);
  const auto& w = hann_window();
  const std::size_t f = 2;
  for (std::size_t b : {0u, 1u, 17u, 128u, 256u}) {
    Complex acc = 0;
    for (std::size_t i = 0; i < kFrameSize; ++i) {
      long p = static_cast<long>(f * kHop + i) - static_cast<long>(kPad);
      if (p < 0) p = -p;
      if (p >= 700) p = 2 * 699 - p;
      acc += w[i] * x[static_cast<std::size_t>(p)] *
             std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(b * i) / kFrameSize);
    }
    EXPECT_NEAR(std::abs(s.at(f, b) - acc), 0.0, 1e-9) << b;
  }
}

TEST(Stft, InverseReconstructsSignal) {
  for (std::size_t len : {16384u, 5000u}) {
    auto x = white_noise(len, 11);
    auto y = istft(stft(x), len);
    double worst = 0;
    for (std::size_t i = 0; i < len; ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    EXPECT_LT(worst, 1e-6) << len;
  }
}

TEST(MelFilterbank, CoverageAndPeaks) {
  const auto& fb = mel_filterbank();
  ASSERT_EQ(fb.rows(), 128);
  ASSERT_EQ(fb.cols(), 257);
  for (Eigen::Index r = 0; r < fb.rows(); ++r) {
    EXPECT_NEAR(fb.row(r).maxCoeff(), 1.0, 1e-12) << r;
    EXPECT_GE(fb.row(r).minCoeff(), 0.0);
  }
  for (Eigen::Index b = 1; b < 256; ++b) EXPECT_GT(fb.col(b).sum(), 0.0) << b;
  EXPECT_NEAR(hz_to_mel(mel_to_hz(1234.5)), 1234.5, 1e-9);
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 1e-9);
}

TEST(MelForward, Examples) {
  const auto& fb = mel_filterbank();
  for (double v : mel_forward(std::vector<double>(2 * kBins, 0.0))) EXPECT_EQ(v, 0.0);
  auto ones = mel_forward(std::vector<double>(kBins, 1.0));
  for (std::size_t f = 0; f < kMelBins; ++f) EXPECT_NEAR(ones[f], fb.row(static_cast<Eigen::Index>(f)).sum(), 1e-12);
  for (std::size_t b = 1; b < 256; b += 7) {
    std::vector<double> imp(kBins, 0.0);
    imp[b] = 1.0;
    auto m = mel_forward(imp);
    std::size_t nonzero = 0;
    for (std::size_t f = 0; f < kMelBins; ++f) {
      if (m[f] != 0.0) {
        ++nonzero;
        EXPECT_GT(fb(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)), 0.0);
      }
    }
    EXPECT_GE(nonzero, 1u);
    EXPECT_LE(nonzero, 2u);
  }
  EXPECT_THROW(mel_forward(std::vector<double>(256, 1.0)), std::invalid_argument);
}

TEST(LogNormalize, EndpointsAndRoundTrip) {
  NormConstants c{std::log10(kMelEpsilon), 2.0};
  EXPECT_EQ(log_normalize(0.0, c), -1.0);
  EXPECT_NEAR(log_normalize(100.0 - kMelEpsilon, c), 1.0, 1e-12);
  EXPECT_EQ(log_normalize(1e9, c), 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-4.9, 1.9);
  for (int i = 0; i < 200; ++i) {
    double m = std::pow(10.0, u(rng));
    double back = denormalize(log_normalize(m, c), c);
    EXPECT_NEAR(back, m, 1e-9 * m);
  }
  EXPECT_THROW(check_norm(NormConstants{1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(speech_features(std::vector<double>(kSegmentSamples, 0.0), NormConstants{2.0, 1.0}),
               std::invalid_argument);
}

TEST(SpeechFeatures, ShapeAndRange) {
  auto x = sine(440.0, kSegmentSamples);
  auto c = norm_for(mel_energies(x));
  auto t = speech_features(x, c);
  ASSERT_EQ(t.shape(), (Shape{1, 128, 128}));
  for (double v : t.to_vector()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(speech_features(std::vector<double>(100, 0.0), c), ShapeError);
}

TEST(InvertSpeech, SineRoundTrip) {
  auto x = sine(440.0, kSegmentSamples);
  auto mel_in = mel_energies(x);
  auto c = norm_for(mel_in);
  auto y = invert_speech(speech_features(x, c), c);
  ASSERT_EQ(y.size(), kSegmentSamples);
  EXPECT_LT(rel_l2(mel_energies(y), mel_in), 0.15);
}

TEST(InvertSpeech, WhiteNoiseCorrelation) {
  auto x = white_noise(kSegmentSamples, 21);
  auto mel_in = mel_energies(x);
  auto c = norm_for(mel_in);
  auto y = invert_speech(speech_features(x, c), c);
  EXPECT_GT(correlation(mel_energies(y), mel_in), 0.9);
}

TEST(InvertSpeech, ZeroSpectrogram) {
  NormConstants c{std::log10(kMelEpsilon), 1.0};
  auto y = invert_speech(Tensor(Shape{1, 128, 128}, -1.0), c);
  for (double v : y) EXPECT_LT(std::abs(v), 1e-6);
}

TEST(Segments, SplitAndPad) {
  auto parts = split_segments(std::vector<double>(kSegmentSamples + 10, 0.25));
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[1][9], 0.25);
  EXPECT_EQ(parts[1][10], 0.0);
}

TEST(Pnm, P5RoundTripIsBitExact) {
  std::vector<std::uint8_t> bytes{'P', '5', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0, 255, 17, 128};
  auto im = decode_pnm(bytes);
  EXPECT_EQ(im.width, 2u);
  EXPECT_EQ(im.channels, 1u);
  EXPECT_EQ(encode_pnm(im), bytes);
  auto t = image_to_tensor(im);
  EXPECT_EQ(t[0], -1.0);
  EXPECT_EQ(t[1], 1.0);
  EXPECT_EQ(tensor_to_image(t).pixels, im.pixels);
}

TEST(Pnm, P6CommentsAndErrors) {
  std::string hdr = "P6 # comment\n1 2\n255\n";
  std::vector<std::uint8_t> bytes(hdr.begin(), hdr.end());
  for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 40));
  auto im = decode_pnm(bytes);
  EXPECT_EQ(im.channels, 3u);
  EXPECT_EQ(im.height, 2u);
  auto t = image_to_tensor(im);
  EXPECT_EQ(t.shape(), (Shape{3, 2, 1}));
  EXPECT_NEAR(t[1], 120.0 / 127.5 - 1.0, 1e-15);  // channel 0, row 1
  EXPECT_EQ(tensor_to_image(t).pixels, im.pixels);

  bytes.pop_back();
  EXPECT_THROW(decode_pnm(bytes), FormatError);
  std::string p2 = "P2\n1 1\n255\n0";
  EXPECT_THROW(decode_pnm(std::vector<std::uint8_t>(p2.begin(), p2.end())), FormatError);
  std::string deep = "P5\n1 1\n65535\n00";
  EXPECT_THROW(decode_pnm(std::vector<std::uint8_t>(deep.begin(), deep.end())), FormatError);
}

TEST(Wav, RoundTripAndErrors) {
  Waveform w;
  w.samples = {0.0, -1.0, 0.5, 32767.0 / 32768.0, -3.0 / 32768.0};
  auto bytes = encode_wav(w);
  EXPECT_EQ(bytes.size(), 44u + 10u);
  auto back = decode_wav(bytes);
  EXPECT_EQ(back.samples, w.samples);
  EXPECT_EQ(encode_wav(back), bytes);

  auto rate = bytes;
  rate[24] = 0x44;
  rate[25] = 0xAC;  // 44100
  EXPECT_THROW(decode_wav(rate), FormatError);
  auto stereo = bytes;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), FormatError);
  auto depth = bytes;
  depth[34] = 8;
  EXPECT_THROW(decode_wav(depth), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_wav(magic), FormatError);
  EXPECT_THROW(decode_wav(std::span(bytes).first(46)), FormatError);
}
