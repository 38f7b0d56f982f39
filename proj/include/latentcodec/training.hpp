#pragma once

// Two-stage training. Stage one: encoder + generator auto-encoder with a
// least-squares GAN term on generator samples from N(0, I). Between stages
// a codebook is fitted on searched latents; stage two fine-tunes on
// straight-through quantized encoder latents, with quantized random latents
// as the adversarial samples.

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "latentcodec/admm.hpp"
#include "latentcodec/datasets.hpp"

namespace latentcodec {

struct TrainConfig {
  std::string data = "synthetic:shapes";
  std::size_t train_samples = 512;
  std::size_t heldout_samples = 64;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr_generator = 1e-3;
  double lr_encoder = 1e-3;
  double lr_discriminator = 5e-4;
  double lambda_adv = 0.01;
  std::uint64_t seed = 1;
  std::size_t levels = 16;
  std::size_t latent_dim = 0;  // 0: 64 for images, 512 for speech
  std::size_t channels = 0;    // 0: architecture default

  std::size_t codebook_samples = 64;
  std::size_t codebook_search_iters = 10;  // latent search: iters x inner steps

  std::size_t stage2_epochs = 10;
  double stage2_lr_scale = 0.5;
  bool stage2_update_all = true;  // also update encoder and discriminator

  void validate() const {
    if (epochs == 0 && stage2_epochs == 0 && train_samples == 0) throw std::invalid_argument("nothing to train");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(lr_generator > 0) || !(lr_encoder > 0) || !(lr_discriminator > 0) || !(stage2_lr_scale > 0))
      throw std::invalid_argument("learning rates must be positive");
    if (!(lambda_adv >= 0) || !std::isfinite(lambda_adv)) throw std::invalid_argument("lambda_adv must be >= 0");
    if (codebook_samples == 0 || codebook_search_iters == 0)
      throw std::invalid_argument("codebook fitting needs samples and search iterations");
  }
};

struct EpochLog {
  int stage = 1;
  std::size_t epoch = 0;  // 0: before any update
  double reconstruction = 0.0;
  double adv_generator = 0.0;
  double adv_discriminator = 0.0;
  double heldout_mse = 0.0;
};

inline void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "stage,epoch,reconstruction,adv_generator,adv_discriminator,heldout_mse\n";
  out << std::setprecision(9);
  for (const auto& e : log)
    out << e.stage << ',' << e.epoch << ',' << e.reconstruction << ',' << e.adv_generator << ','
        << e.adv_discriminator << ',' << e.heldout_mse << '\n';
}

struct TrainResult {
  ModelBundle bundle;
  std::vector<EpochLog> log;
};

inline ArchConfig arch_for(const Dataset& d, const TrainConfig& c) {
  ArchConfig a = d.signal == SignalKind::image ? ArchConfig::image() : ArchConfig::speech();
  if (c.latent_dim) a.latent_dim = c.latent_dim;
  if (c.channels) a.channels = c.channels;
  a.image_channels = d.shape[0];
  a.base = d.shape[1] / 8;
  if (a.signal_shape() != d.shape) throw ShapeError("dataset shape " + to_string(d.shape) + " has no architecture");
  return a;
}

/// Adam over a fixed parameter list, reading the gradients accumulated on
/// the leaves and clearing them after each step.
class ParamAdam {
 public:
  ParamAdam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step(double scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t_)), c2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) continue;
      auto g = p.grad();
      std::vector<double> grad(g.begin(), g.end());
      auto w = p.mutable_data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        double gj = grad[j] * scale;
        m_[i][j] = 0.9 * m_[i][j] + 0.1 * gj;
        v_[i][j] = 0.999 * v_[i][j] + 0.001 * gj * gj;
        w[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + 1e-8);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  std::size_t t_ = 0;
};

inline double mean_reconstruction_mse(const ModelBundle& b, const std::vector<Tensor>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  double s = 0;
  for (const auto& x : samples) s += mse(generator_forward(b, encoder_forward(b, x)), x).item();
  return s / static_cast<double>(samples.size());
}

/// Mean MSE of G(Q(E(x))).
inline double mean_quantized_mse(const ModelBundle& b, const Codebook& cb, const std::vector<Tensor>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  double s = 0;
  for (const auto& x : samples) {
    auto q = quantize_project(encoder_forward(b, x).to_vector(), cb);
    s += mse(generator_forward(b, Tensor::vector(q.values)), x).item();
  }
  return s / static_cast<double>(samples.size());
}

namespace detail {

inline void check_loss(double v, int stage, std::size_t epoch) {
  if (!std::isfinite(v))
    throw NumericError("training diverged (stage " + std::to_string(stage) + ", epoch " + std::to_string(epoch) + ")");
}

inline Tensor random_latent(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return Tensor::vector(std::move(v));
}

inline Tensor lsgan(const Tensor& d, double target) { return mean(square(add_scalar(d, -target))); }

/// One pass over the shuffled training set. `latent(x)` is the generator
/// input for reconstruction; `fake(rng, x)` the latent of the adversarial
/// sample. Gradients are summed per sample and averaged per batch.
template <class LatentFn, class FakeFn>
EpochLog run_epoch(ModelBundle& b, const std::vector<Tensor>& train, std::size_t batch, double lambda_adv,
                   ParamAdam& opt_g, ParamAdam* opt_e, ParamAdam* opt_d, std::mt19937_64& order_rng,
                   std::mt19937_64& z_rng, const LatentFn& latent, const FakeFn& fake) {
  EpochLog log;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), order_rng);
  const bool adversarial = lambda_adv > 0 && b.discriminator;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    const double weight = 1.0 / static_cast<double>(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const Tensor& x = train[order[i]];
      Tensor zf = fake(z_rng, x);
      if (adversarial && opt_d) {
        Tensor g = b.generator.forward(zf).detach();
        Tensor ld = scale(add(lsgan(b.discriminator->forward(x, ParamMode::trainable), 1.0),
                              lsgan(b.discriminator->forward(g, ParamMode::trainable), 0.0)),
                          0.5);
        log.adv_discriminator += ld.item();
        backward(ld);
      }
      Tensor rec = mse(b.generator.forward(latent(x), ParamMode::trainable), x);
      Tensor loss = rec;
      log.reconstruction += rec.item();
      if (adversarial) {
        Tensor la = lsgan(b.discriminator->forward(b.generator.forward(zf, ParamMode::trainable)), 1.0);
        log.adv_generator += la.item();
        loss = add(loss, scale(la, lambda_adv));
      }
      backward(loss);
    }
    opt_g.step(weight);
    if (opt_e) opt_e->step(weight);
    if (opt_d) opt_d->step(weight);
  }
  const double n = static_cast<double>(train.size());
  log.reconstruction /= n;
  log.adv_generator /= n;
  log.adv_discriminator /= n;
  return log;
}

}  // namespace detail

/// Stage one on a loaded dataset. The log starts with an epoch-0 row (the
/// untrained bundle's held-out reconstruction MSE).
inline TrainResult train_stage_one(const TrainConfig& c, const Dataset& d) {
  c.validate();
  if (d.train.empty()) throw std::invalid_argument("empty dataset");
  TrainResult r;
  r.bundle = make_bundle(arch_for(d, c), c.seed, c.lambda_adv > 0);
  r.bundle.norm = d.norm;
  ModelBundle& b = r.bundle;
  r.log.push_back({1, 0, 0, 0, 0, mean_reconstruction_mse(b, d.heldout)});

  ParamAdam opt_g(b.generator.parameters(), c.lr_generator), opt_e(b.encoder.parameters(), c.lr_encoder);
  std::optional<ParamAdam> opt_d;
  if (b.discriminator) opt_d.emplace(b.discriminator->parameters(), c.lr_discriminator);
  std::mt19937_64 order_rng(c.seed + 1), z_rng(c.seed + 2);
  auto latent = [&](const Tensor& x) { return b.encoder.forward(x, ParamMode::trainable); };
  auto fake = [&](std::mt19937_64& rng, const Tensor&) { return detail::random_latent(b.latent_dim(), rng); };
  for (std::size_t e = 1; e <= c.epochs; ++e) {
    EpochLog l = detail::run_epoch(b, d.train, c.batch_size, c.lambda_adv, opt_g, &opt_e,
                                   opt_d ? &*opt_d : nullptr, order_rng, z_rng, latent, fake);
    l.stage = 1;
    l.epoch = e;
    l.heldout_mse = mean_reconstruction_mse(b, d.heldout);
    detail::check_loss(l.reconstruction + l.adv_generator + l.adv_discriminator + l.heldout_mse, 1, e);
    r.log.push_back(l);
  }
  b.freeze();
  return r;
}

inline TrainResult train_stage_one(const TrainConfig& c) {
  return train_stage_one(c, load_dataset(c.data, c.train_samples, c.heldout_samples, c.seed));
}

/// Pooled latent elements from an unconstrained encoder-initialized search
/// on the first `c.codebook_samples` training samples.
inline std::vector<double> pool_latents(const ModelBundle& b, const std::vector<Tensor>& samples, const TrainConfig& c) {
  AdmmConfig search;
  search.admm_iters = c.codebook_search_iters;
  search.init = InitKind::encoder;
  LossSpec spec = LossSpec::for_signal(b.signal());
  std::vector<double> pool;
  const std::size_t n = std::min(samples.size(), c.codebook_samples);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = latent_search(b, samples[i], spec, search).z;
    pool.insert(pool.end(), z.begin(), z.end());
  }
  return pool;
}

inline Codebook fit_stage_codebook(const ModelBundle& b, const std::vector<Tensor>& samples, std::size_t k,
                                   const TrainConfig& c) {
  auto pool = pool_latents(b, samples, c);
  return fit_codebook(pool, k, c.seed);
}

/// Fine-tunes a copy of the bundle with generator inputs Q(E(x))
/// (straight-through). Zero epochs returns an unchanged copy.
inline TrainResult train_stage_two(const ModelBundle& stage_one, const Codebook& cb, const TrainConfig& c,
                                   const Dataset& d) {
  c.validate();
  cb.validate();
  TrainResult r;
  r.bundle = stage_one.clone();
  if (c.stage2_epochs == 0) return r;
  ModelBundle& b = r.bundle;
  r.log.push_back({2, 0, 0, 0, 0, mean_quantized_mse(b, cb, d.heldout)});

  const double s = c.stage2_lr_scale;
  ParamAdam opt_g(b.generator.parameters(), c.lr_generator * s), opt_e(b.encoder.parameters(), c.lr_encoder * s);
  std::optional<ParamAdam> opt_d;
  if (b.discriminator && c.stage2_update_all) opt_d.emplace(b.discriminator->parameters(), c.lr_discriminator * s);
  std::mt19937_64 order_rng(c.seed + 3), z_rng(c.seed + 4);
  const ParamMode enc_mode = c.stage2_update_all ? ParamMode::trainable : ParamMode::frozen;
  auto latent = [&](const Tensor& x) {
    Tensor z = b.encoder.forward(x, enc_mode);
    auto q = quantize_project(z.to_vector(), cb);
    return enc_mode == ParamMode::trainable ? straight_through(z, q.values) : Tensor::vector(q.values);
  };
  // Adversarial samples: quantized draws from the pooled-latent statistics.
  const double mu = cb.source_stats.count ? cb.source_stats.mean : 0.0;
  const double sd = cb.source_stats.count ? std::sqrt(cb.source_stats.variance) : 1.0;
  auto fake = [&](std::mt19937_64& rng, const Tensor&) {
    std::normal_distribution<double> nd(mu, sd);
    std::vector<double> z(b.latent_dim());
    for (auto& v : z) v = nd(rng);
    return Tensor::vector(quantize_project(z, cb).values);
  };
  for (std::size_t e = 1; e <= c.stage2_epochs; ++e) {
    EpochLog l = detail::run_epoch(b, d.train, c.batch_size, c.lambda_adv, opt_g,
                                   c.stage2_update_all ? &opt_e : nullptr, opt_d ? &*opt_d : nullptr, order_rng,
                                   z_rng, latent, fake);
    l.stage = 2;
    l.epoch = e;
    l.heldout_mse = mean_quantized_mse(b, cb, d.heldout);
    detail::check_loss(l.reconstruction + l.adv_generator + l.adv_discriminator + l.heldout_mse, 2, e);
    r.log.push_back(l);
  }
  b.freeze();
  return r;
}

/// Stage one, codebook fit, and (if `stage_two`) stage two; the codebook is
/// embedded in the returned, frozen bundle.
inline TrainResult train_pipeline(const TrainConfig& c, const Dataset& d, bool stage_two) {
  TrainResult one = train_stage_one(c, d);
  Codebook cb = fit_stage_codebook(one.bundle, d.train, c.levels, c);
  TrainResult out = stage_two ? train_stage_two(one.bundle, cb, c, d) : TrainResult{one.bundle.clone(), {}};
  out.log.insert(out.log.begin(), one.log.begin(), one.log.end());
  out.bundle.codebook = cb;
  out.bundle.freeze();
  return out;
}

}  // namespace latentcodec
