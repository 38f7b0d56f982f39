#pragma once

// Target losses F(x, G(z)) and evaluation metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentcodec/bundle.hpp"
#include "latentcodec/ops.hpp"

namespace latentcodec {

struct LossSpec {
  SignalKind kind = SignalKind::image;
  double alpha = 10.0;
  std::size_t ms_ssim_scales = 3;
  std::vector<std::size_t> feature_layers{2, 4, 6};

  static LossSpec image(double alpha = 10.0) { return {SignalKind::image, alpha, 3, {2, 4, 6}}; }
  static LossSpec speech(double alpha = 1.0) { return {SignalKind::speech, alpha, 3, {2, 4, 6}}; }
  static LossSpec for_signal(SignalKind k) { return k == SignalKind::image ? image() : speech(); }

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be non-negative");
    if (ms_ssim_scales < 1 || ms_ssim_scales > 5) throw std::invalid_argument("ms_ssim_scales must be in [1, 5]");
  }
};

inline Tensor mse(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) {
    throw ShapeError("mse: shapes " + to_string(x.shape()) + " and " + to_string(y.shape()));
  }
  return mean(square(sub(x, y)));
}

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr std::size_t kMsSsimWindow = 11;
inline constexpr double kMsSsimSigma = 1.5;
// Smallest spatial extent allowed at the coarsest scale.
inline constexpr std::size_t kMsSsimMinExtent = 8;

/// First `scales` standard weights, renormalized to sum to one.
inline std::vector<double> ms_ssim_weights(std::size_t scales) {
  if (scales < 1 || scales > kMsSsimWeights.size()) throw std::invalid_argument("ms_ssim scales out of range");
  std::vector<double> w(kMsSsimWeights.begin(), kMsSsimWeights.begin() + static_cast<std::ptrdiff_t>(scales));
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

/// Window used at a scale of the given extent: 11, shrunk to fit small maps.
inline std::size_t ms_ssim_window(std::size_t h, std::size_t w) {
  return std::min({kMsSsimWindow, h, w});
}

/// MS-SSIM for C x H x W tensors with values in [-1, 1] (dynamic range 2).
inline Tensor ms_ssim(const Tensor& x, const Tensor& y, std::size_t scales = 3) {
  if (x.shape() != y.shape()) {
    throw ShapeError("ms_ssim: shapes " + to_string(x.shape()) + " and " + to_string(y.shape()));
  }
  if (x.rank() != 3) throw ShapeError("ms_ssim: expects C x H x W");
  auto weights = ms_ssim_weights(scales);
  std::size_t h = x.dim(1), w = x.dim(2);
  for (std::size_t s = 1; s < scales; ++s) h /= 2, w /= 2;
  if (std::min(h, w) < kMsSsimMinExtent) {
    throw ShapeError("ms_ssim: image " + to_string(x.shape()) + " too small for " + std::to_string(scales) +
                     " scales");
  }
  const double c1 = (0.01 * 2.0) * (0.01 * 2.0), c2 = (0.03 * 2.0) * (0.03 * 2.0);
  Tensor a = x, b = y;
  Tensor result;
  for (std::size_t s = 0; s < scales; ++s) {
    if (s > 0) {
      a = avg_pool2(a);
      b = avg_pool2(b);
    }
    std::size_t win = ms_ssim_window(a.dim(1), a.dim(2));
    auto blur = [&](const Tensor& t) { return gaussian_blur(t, win, kMsSsimSigma); };
    Tensor mu_a = blur(a), mu_b = blur(b);
    Tensor mu_aa = square(mu_a), mu_bb = square(mu_b), mu_ab = mul(mu_a, mu_b);
    Tensor var_a = sub(blur(square(a)), mu_aa);
    Tensor var_b = sub(blur(square(b)), mu_bb);
    Tensor cov = sub(blur(mul(a, b)), mu_ab);
    Tensor cs_map = div(add_scalar(scale(cov, 2.0), c2), add_scalar(add(var_a, var_b), c2));
    Tensor factor;
    if (s + 1 < scales) {
      factor = mean(cs_map);
    } else {
      Tensor lum = div(add_scalar(scale(mu_ab, 2.0), c1), add_scalar(add(mu_aa, mu_bb), c1));
      factor = mean(mul(lum, cs_map));
    }
    Tensor term = pow(relu(factor), weights[s]);
    result = s == 0 ? term : mul(result, term);
  }
  return result;
}

inline Tensor image_loss(const Tensor& x, const Tensor& g, double alpha, std::size_t scales = 3) {
  return add(add_scalar(scale(ms_ssim(x, g, scales), -1.0), 1.0), scale(mse(x, g), alpha));
}

/// Sum over the chosen discriminator taps of the per-tap MSE, plus alpha * MSE.
/// Tap 0 is the raw input.
inline Tensor feature_loss(const Tensor& x, const Tensor& g, const ModelBundle& bundle, const LossSpec& spec) {
  if (!bundle.discriminator) throw std::invalid_argument("feature_loss: bundle has no discriminator");
  const Network& d = *bundle.discriminator;
  for (std::size_t l : spec.feature_layers) {
    if (l > d.layers().size()) throw std::invalid_argument("feature_loss: layer index out of range");
  }
  std::vector<Tensor> tx, tg;
  d.forward(x.detach(), ParamMode::frozen, &tx);
  d.forward(g, ParamMode::frozen, &tg);
  Tensor total = scale(mse(x, g), spec.alpha);
  for (std::size_t l : spec.feature_layers) total = add(total, mse(tx[l], tg[l]));
  return total;
}

/// F(x, g) for a bundle and loss spec.
using TargetLoss = std::function<Tensor(const Tensor& x, const Tensor& g)>;

inline TargetLoss make_target_loss(const ModelBundle& bundle, const LossSpec& spec) {
  spec.validate();
  if (spec.kind == SignalKind::image) {
    return [spec](const Tensor& x, const Tensor& g) { return image_loss(x, g, spec.alpha, spec.ms_ssim_scales); };
  }
  const ModelBundle* b = &bundle;
  return [b, spec](const Tensor& x, const Tensor& g) { return feature_loss(x, g, *b, spec); };
}

inline constexpr double kPsnrCap = 99.0;

inline double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / m));
}

inline double psnr(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  if (x.size() != y.size()) throw ShapeError("psnr: size mismatch");
  if (x.empty()) throw ShapeError("psnr: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return psnr_from_mse(s / static_cast<double>(x.size()));
}

}  // namespace latentcodec
