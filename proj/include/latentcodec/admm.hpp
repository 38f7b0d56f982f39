#pragma once

// Latent search by back-propagation through a frozen generator, and the
// ADMM search for a quantized latent (z / u / eta updates, then refinement).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentcodec/bundle.hpp"
#include "latentcodec/losses.hpp"
#include "latentcodec/quant.hpp"

namespace latentcodec {

/// Scalar objective of the latent alone, e.g. z -> F(x, G(z)).
using LatentObjective = std::function<Tensor(const Tensor& z)>;

enum class OptimizerKind { adam, sgd };
enum class InitKind { encoder, zeros, given };

struct AdmmConfig {
  double mu = 0.1;
  std::size_t admm_iters = 30;
  std::size_t inner_steps = 10;
  double step_size = 0.01;
  OptimizerKind optimizer = OptimizerKind::adam;
  InitKind init = InitKind::encoder;
  double stop_tol = 1e-5;
  double mu_growth = 1.5;
  std::size_t mu_interval = 5;
  double stall_ratio = 0.5;  // residual must shrink below this fraction per interval
  std::size_t max_backoff = 5;

  void validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (admm_iters < 1) throw std::invalid_argument("admm_iters must be >= 1");
    if (inner_steps < 1) throw std::invalid_argument("inner_steps must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("step_size must be positive");
    if (!(stop_tol >= 0.0)) throw std::invalid_argument("stop_tol must be non-negative");
    if (!(mu_growth >= 1.0) || mu_interval < 1) throw std::invalid_argument("bad mu schedule");
  }
};

inline const char* init_name(InitKind k) {
  switch (k) {
    case InitKind::encoder: return "encoder";
    case InitKind::zeros: return "zeros";
    case InitKind::given: return "given";
  }
  return "?";
}

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::vector<double> m, v;
  std::size_t t = 0;

  static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void reset(OptimizerKind k, std::size_t n) {
    kind = k;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }

  /// Descent direction for the given gradient (the step is -lr * direction).
  std::vector<double> direction(std::span<const double> g) {
    std::vector<double> d(g.begin(), g.end());
    if (kind == OptimizerKind::sgd) return d;
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < d.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      d[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    return d;
  }
};

namespace detail {

inline double evaluate(const LatentObjective& f, std::span<const double> z) {
  return f(Tensor(Shape{z.size()}, std::vector<double>(z.begin(), z.end()))).item();
}

struct DescentStats {
  std::size_t steps = 0;
  double loss = 0.0;
};

/// `steps` gradient steps with step-size backoff: a candidate that raises the
/// objective is retried at half the step, up to max_backoff times, and the
/// step is skipped if none is accepted. The objective never increases.
/// The starting loss and each step's loss go to `trace`; descent stops early
/// once the loss is at or below `target`.
inline DescentStats descend(const LatentObjective& f, std::vector<double>& z, OptimizerState& opt,
                            std::size_t steps, double step_size, std::size_t max_backoff,
                            std::vector<double>* trace = nullptr,
                            std::optional<double> target = std::nullopt) {
  Tensor zt = Tensor::variable(Shape{z.size()}, z);
  Tensor loss = f(zt);
  DescentStats st;
  st.loss = loss.item();
  if (!std::isfinite(st.loss)) throw NumericError("non-finite loss");
  if (trace) trace->push_back(st.loss);
  for (std::size_t s = 0; s < steps; ++s) {
    if (target && st.loss <= *target) break;
    std::vector<double> grad(z.size(), 0.0);
    if (loss.requires_grad()) {
      Gradients g = backward(loss);
      if (g.contains(zt)) grad = g[zt].to_vector();
    }
    for (double v : grad)
      if (!std::isfinite(v)) throw NumericError("non-finite gradient");
    auto dir = opt.direction(grad);
    bool accepted = false;
    double h = step_size;
    for (std::size_t attempt = 0; attempt <= max_backoff; ++attempt, h *= 0.5) {
      std::vector<double> cand(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) cand[i] = z[i] - h * dir[i];
      Tensor ct = Tensor::variable(Shape{z.size()}, cand);
      Tensor cl = f(ct);
      if (cl.item() <= st.loss) {
        z = std::move(cand);
        zt = ct;
        loss = cl;
        st.loss = cl.item();
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      zt = Tensor::variable(Shape{z.size()}, z);
      loss = f(zt);
    }
    ++st.steps;
    if (trace) trace->push_back(st.loss);
  }
  return st;
}

inline double linf(std::span<const double> a, std::span<const double> b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

}  // namespace detail

/// z -> F(x, G(z)) with the generator frozen.
inline LatentObjective bundle_objective(const ModelBundle& bundle, const Tensor& x, const LossSpec& spec) {
  if (x.shape() != bundle.signal_shape()) {
    throw ShapeError("signal shape " + to_string(x.shape()) + ", bundle expects " +
                     to_string(bundle.signal_shape()));
  }
  TargetLoss F = make_target_loss(bundle, spec);
  Tensor target = x.detach();
  const ModelBundle* b = &bundle;
  return [b, F, target](const Tensor& z) { return F(target, generator_forward(*b, z)); };
}

/// Initial latent for a signal according to config.init.
inline std::vector<double> initial_latent(const ModelBundle& bundle, const Tensor& x, InitKind init,
                                          const std::vector<double>* given = nullptr) {
  switch (init) {
    case InitKind::encoder: return encoder_forward(bundle, x).to_vector();
    case InitKind::zeros: return std::vector<double>(bundle.latent_dim(), 0.0);
    case InitKind::given:
      if (!given || given->size() != bundle.latent_dim()) throw ShapeError("given initial latent has wrong length");
      return *given;
  }
  return {};
}

struct SearchResult {
  std::vector<double> z;
  std::vector<double> loss_trace;  // initial loss, then one entry per gradient step
  std::size_t steps = 0;
  double initial_loss() const { return loss_trace.front(); }
  double final_loss() const { return loss_trace.back(); }
};

/// Unconstrained search: admm_iters * inner_steps gradient steps from z0.
/// Stops early once the loss reaches `target` when one is given.
inline SearchResult latent_search(const LatentObjective& f, std::vector<double> z0, const AdmmConfig& config,
                                  std::optional<double> target = std::nullopt) {
  config.validate();
  SearchResult r;
  r.z = std::move(z0);
  OptimizerState opt;
  opt.reset(config.optimizer, r.z.size());
  try {
    r.steps = detail::descend(f, r.z, opt, config.admm_iters * config.inner_steps, config.step_size,
                              config.max_backoff, &r.loss_trace, target)
                  .steps;
  } catch (const NumericError& e) {
    throw NumericError("latent search diverged at iteration " + std::to_string(r.loss_trace.size()) + ": " +
                       e.what());
  }
  return r;
}

inline SearchResult latent_search(const ModelBundle& bundle, const Tensor& x, const LossSpec& spec,
                                  const AdmmConfig& config, std::optional<double> target = std::nullopt) {
  return latent_search(bundle_objective(bundle, x, spec), initial_latent(bundle, x, config.init), config, target);
}

struct AdmmState {
  std::vector<double> z, u, eta;
  std::size_t k = 0;
  double mu = 0.1;
  std::vector<double> loss_trace;
  OptimizerState opt;
  std::size_t gradient_steps = 0;
};

/// z0 as given; u0 = Q(z0); eta0 = 0.
inline AdmmState init_state(std::vector<double> z0, const Codebook& cb, const AdmmConfig& config) {
  AdmmState s;
  s.u = quantize_project(z0, cb).values;
  s.eta.assign(z0.size(), 0.0);
  s.z = std::move(z0);
  s.mu = config.mu;
  s.opt.reset(config.optimizer, s.z.size());
  return s;
}

/// Proximal objective F(z) + mu/2 * ||z - u + eta||^2.
inline LatentObjective proximal_objective(const LatentObjective& f, const AdmmState& s) {
  std::vector<double> shift(s.z.size());
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = s.eta[i] - s.u[i];
  Tensor c = Tensor::vector(std::move(shift));
  const double half_mu = 0.5 * s.mu;
  return [f, c, half_mu](const Tensor& z) { return add(f(z), scale(sum(square(add(z, c))), half_mu)); };
}

inline const std::vector<double>& z_update(AdmmState& s, const LatentObjective& f, const AdmmConfig& config) {
  auto prox = proximal_objective(f, s);
  // Each z-update is a fresh subproblem; stale moments stall the residual.
  s.opt.reset(config.optimizer, s.z.size());
  auto st = detail::descend(prox, s.z, s.opt, config.inner_steps, config.step_size, config.max_backoff);
  s.gradient_steps += st.steps;
  return s.z;
}

/// u = Q(z + eta).
inline Quantized u_update(AdmmState& s, const Codebook& cb) {
  std::vector<double> w(s.z.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = s.z[i] + s.eta[i];
  Quantized q = quantize_project(w, cb);
  s.u = q.values;
  return q;
}

/// eta += z - u.
inline const std::vector<double>& eta_update(AdmmState& s) {
  for (std::size_t i = 0; i < s.eta.size(); ++i) s.eta[i] += s.z[i] - s.u[i];
  return s.eta;
}

/// Scaled dual keeps mu * eta fixed across a penalty change.
inline void set_mu(AdmmState& s, double mu) {
  const double r = s.mu / mu;
  for (double& e : s.eta) e *= r;
  s.mu = mu;
}

struct AdmmReport {
  std::vector<double> loss_trace;            // F(z) after each z-update
  std::vector<double> quantized_loss_trace;  // F(u) after each u-update
  std::vector<double> residual_trace;        // ||z - u||_inf after each iteration
  std::vector<double> mu_trace;
  std::size_t admm_iterations = 0;
  std::size_t refinement_passes = 0;
  std::size_t gradient_steps = 0;
  double initial_quantized_loss = 0.0;  // F(Q(z0))
  double final_loss = 0.0;              // F(u_final)

  std::string to_log() const {
    std::ostringstream o;
    o.precision(9);
    o << "# iteration loss quantized_loss residual mu\n";
    for (std::size_t i = 0; i < loss_trace.size(); ++i)
      o << i + 1 << ' ' << loss_trace[i] << ' ' << quantized_loss_trace[i] << ' ' << residual_trace[i] << ' '
        << mu_trace[i] << '\n';
    o << "# admm_iterations " << admm_iterations << " refinement_passes " << refinement_passes
      << " gradient_steps " << gradient_steps << '\n';
    o << "# initial_quantized_loss " << initial_quantized_loss << " final_loss " << final_loss << '\n';
    return o.str();
  }
};

struct AdmmResult {
  std::vector<std::uint8_t> indices;
  std::vector<double> u_final;
  AdmmReport report;
};

/// ADMM over (z, u, eta), then refinement: from the best quantized latent,
/// run inner_steps unconstrained steps and re-quantize while the quantized
/// loss improves by at least stop_tol, for at most admm_iters passes. The
/// result is never worse than Q(z0).
inline AdmmResult admm_quantized_search(const LatentObjective& f, std::vector<double> z0, const Codebook& cb,
                                        const AdmmConfig& config) {
  config.validate();
  cb.validate();
  if (z0.empty()) throw ShapeError("empty latent");
  AdmmState s = init_state(std::move(z0), cb, config);
  AdmmReport rep;

  Quantized best = quantize_project(s.z, cb);
  double best_loss = detail::evaluate(f, best.values);
  rep.initial_quantized_loss = best_loss;
  auto consider = [&](const Quantized& q, double loss) {
    if (loss < best_loss) {
      best = q;
      best_loss = loss;
    }
  };

  // Stall test compares the largest residual of each window of mu_interval
  // iterations with the previous window's, since the residual oscillates.
  double previous_window = detail::linf(s.z, s.u), current_window = 0.0;
  try {
    for (std::size_t k = 0; k < config.admm_iters; ++k) {
      if (k > 0 && k % config.mu_interval == 0) {
        if (current_window > config.stall_ratio * previous_window) set_mu(s, s.mu * config.mu_growth);
        previous_window = current_window;
        current_window = 0.0;
      }
      z_update(s, f, config);
      double fz = detail::evaluate(f, s.z);
      Quantized q = u_update(s, cb);
      eta_update(s);
      double fu = detail::evaluate(f, q.values);
      consider(q, fu);
      s.k = k + 1;
      s.loss_trace.push_back(fz);
      rep.loss_trace.push_back(fz);
      rep.quantized_loss_trace.push_back(fu);
      rep.residual_trace.push_back(detail::linf(s.z, s.u));
      current_window = std::max(current_window, rep.residual_trace.back());
      rep.mu_trace.push_back(s.mu);
      rep.admm_iterations = k + 1;
      if (rep.residual_trace.back() <= config.stop_tol) break;
    }

    OptimizerState opt;
    for (std::size_t pass = 0; pass < config.admm_iters; ++pass) {
      std::vector<double> z = best.values;
      opt.reset(config.optimizer, z.size());
      auto st = detail::descend(f, z, opt, config.inner_steps, config.step_size, config.max_backoff);
      s.gradient_steps += st.steps;
      ++rep.refinement_passes;
      Quantized q = quantize_project(z, cb);
      double fq = detail::evaluate(f, q.values);
      double gain = best_loss - fq;
      consider(q, fq);
      if (gain < config.stop_tol) break;
    }
  } catch (const NumericError& e) {
    throw NumericError("ADMM search diverged at iteration " + std::to_string(s.k) + ": " + e.what());
  }

  rep.gradient_steps = s.gradient_steps;
  rep.final_loss = best_loss;
  return AdmmResult{std::move(best.indices), std::move(best.values), std::move(rep)};
}

inline AdmmResult admm_quantized_search(const ModelBundle& bundle, const Tensor& x, const LossSpec& spec,
                                        const Codebook& cb, const AdmmConfig& config,
                                        const std::vector<double>* given_init = nullptr) {
  auto z0 = initial_latent(bundle, x, config.init, given_init);
  if (z0.size() != bundle.latent_dim()) throw ShapeError("codebook/latent length mismatch");
  return admm_quantized_search(bundle_objective(bundle, x, spec), std::move(z0), cb, config);
}

/// One-shot baseline: Q(E(x)) and its loss.
inline std::pair<Quantized, double> encode_quantize_baseline(const ModelBundle& bundle, const Tensor& x,
                                                             const LossSpec& spec, const Codebook& cb) {
  Quantized q = quantize_project(encoder_forward(bundle, x).to_vector(), cb);
  double loss = detail::evaluate(bundle_objective(bundle, x, spec), q.values);
  return {std::move(q), loss};
}

}  // namespace latentcodec
