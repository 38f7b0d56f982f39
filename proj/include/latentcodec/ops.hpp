#pragma once

// Differentiable operations on Tensor. Spatial ops use C x H x W layout;
// conv weights are O x C x k x k, transposed-conv weights C_in x C_out x k x k
// (so the same weight tensor makes conv2d and conv_transpose2d adjoint).

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "latentcodec/tensor.hpp"

namespace latentcodec {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     to_string(a.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  Tensor result = make_result(a.shape(), std::move(out), {&a}, op, nullptr);
  if (result.requires_grad()) {
    // The closure holds the output storage, not the output node, so no cycle.
    result.node()->backward = [an = a.node(), outv = result.node()->data,
                               deriv](const std::vector<double>& g) {
      auto& ga = an->grad_buffer();
      const auto& x = *an->data;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], (*outv)[i]);
    };
  }
  return result;
}

// Valid output index range [lo, hi) for out = in*stride + k - pad landing in [0, extent).
struct Range {
  std::ptrdiff_t lo, hi;
};
inline Range scatter_range(std::ptrdiff_t in_extent, std::ptrdiff_t stride, std::ptrdiff_t offset,
                           std::ptrdiff_t out_extent) {
  // in index i contributes to out = i*stride + offset, need 0 <= out < out_extent.
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = out_extent - 1 - offset < 0 ? 0 : (out_extent - 1 - offset) / stride + 1;
  return {lo, std::min(hi, in_extent)};
}

}  // namespace detail

// ---- elementwise binary -------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, "add",
                             [an, bn](const std::vector<double>& g) {
                               for (auto* n : {an.get(), bn.get()}) {
                                 if (!n->requires_grad) continue;
                                 auto& gb = n->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                               }
                             });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, "sub",
                             [an, bn](const std::vector<double>& g) {
                               if (an->requires_grad) {
                                 auto& ga = an->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                               }
                               if (bn->requires_grad) {
                                 auto& gb = bn->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                               }
                             });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, "mul",
                             [an, bn](const std::vector<double>& g) {
                               if (an->requires_grad) {
                                 auto& ga = an->grad_buffer();
                                 const auto& y = *bn->data;
                                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                               }
                               if (bn->requires_grad) {
                                 auto& gb = bn->grad_buffer();
                                 const auto& x = *an->data;
                                 for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                               }
                             });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result(a.shape(), std::move(out), {&a, &b}, "div",
                             [an, bn](const std::vector<double>& g) {
                               const auto& x = *an->data;
                               const auto& y = *bn->data;
                               if (an->requires_grad) {
                                 auto& ga = an->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / y[i];
                               }
                               if (bn->requires_grad) {
                                 auto& gb = bn->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   gb[i] -= g[i] * x[i] / (y[i] * y[i]);
                               }
                             });
}

// ---- scalar affine ------------------------------------------------------

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(a, "scale", [c](double x) { return c * x; },
                       [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(a, "add_scalar", [c](double x) { return x + c; },
                       [](double, double) { return 1.0; });
}

// ---- activations and pointwise math -------------------------------------

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                       [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
  return detail::unary(a, "leaky_relu", [slope](double x) { return x > 0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, "square", [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                       [](double, double y) { return 0.5 / y; });
}

/// x^e for x >= 0; derivative taken as 0 at x == 0.
inline Tensor pow(const Tensor& a, double e) {
  return detail::unary(a, "pow", [e](double x) { return std::pow(x, e); },
                       [e](double x, double) { return x > 0 ? e * std::pow(x, e - 1.0) : 0.0; });
}

// ---- reductions and shape ------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  auto an = a.node();
  return detail::make_result(Shape{}, {s}, {&a}, "sum", [an](const std::vector<double>& g) {
    auto& ga = an->grad_buffer();
    for (double& v : ga) v += g[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  double n = static_cast<double>(a.numel());
  auto an = a.node();
  return detail::make_result(Shape{}, {s / n}, {&a}, "mean", [an, n](const std::vector<double>& g) {
    auto& ga = an->grad_buffer();
    for (double& v : ga) v += g[0] / n;
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  auto an = a.node();
  return detail::make_result(std::move(shape), a.to_vector(), {&a}, "reshape",
                             [an](const std::vector<double>& g) {
                               auto& ga = an->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
}

/// Zero padding of the two spatial dims of a C x H x W tensor.
inline Tensor pad(const Tensor& a, std::size_t p) {
  detail::require_rank(a, 3, "pad");
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const std::size_t Hp = H + 2 * p, Wp = W + 2 * p;
  std::vector<double> out(C * Hp * Wp, 0.0);
  auto av = a.data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out[(c * Hp + y + p) * Wp + x + p] = av[(c * H + y) * W + x];
  auto an = a.node();
  return detail::make_result(Shape{C, Hp, Wp}, std::move(out), {&a}, "pad",
                             [an, C, H, W, Hp, Wp, p](const std::vector<double>& g) {
                               auto& ga = an->grad_buffer();
                               for (std::size_t c = 0; c < C; ++c)
                                 for (std::size_t y = 0; y < H; ++y)
                                   for (std::size_t x = 0; x < W; ++x)
                                     ga[(c * H + y) * W + x] += g[(c * Hp + y + p) * Wp + x + p];
                             });
}

// ---- linear algebra ------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw ShapeError("matmul: inner dims differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  auto av = a.data(), bv = b.data();
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double aik = av[i * n + k];
      const double* brow = &bv[k * p];
      double* orow = &out[i * p];
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  auto an = a.node(), bn = b.node();
  return detail::make_result(
      Shape{m, p}, std::move(out), {&a, &b}, "matmul", [an, bn, m, n, p](const std::vector<double>& g) {
        const auto& A = *an->data;
        const auto& B = *bn->data;
        if (an->requires_grad) {
          auto& ga = an->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < n; ++k) {
              double s = 0.0;
              for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * B[k * p + j];
              ga[i * n + k] += s;
            }
        }
        if (bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < n; ++k) {
              double aik = A[i * n + k];
              for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * g[i * p + j];
            }
        }
      });
}

// ---- convolutions ------------------------------------------------------

/// x: C x H x W, w: O x C x k x k, bias: O (may be undefined).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                     std::size_t padding) {
  detail::require_rank(x, 3, "conv2d");
  detail::require_rank(w, 4, "conv2d");
  const std::ptrdiff_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::ptrdiff_t O = w.dim(0), K = w.dim(2);
  const std::ptrdiff_t S = stride, P = padding;
  if (static_cast<std::ptrdiff_t>(w.dim(1)) != C || w.dim(3) != w.dim(2)) {
    throw ShapeError("conv2d: weight " + to_string(w.shape()) + " incompatible with input " +
                     to_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || static_cast<std::ptrdiff_t>(bias.dim(0)) != O)) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()));
  }
  if (stride == 0 || H + 2 * P < K || W + 2 * P < K) {
    throw ShapeError("conv2d: kernel larger than padded input " + to_string(x.shape()));
  }
  const std::ptrdiff_t Ho = (H + 2 * P - K) / S + 1, Wo = (W + 2 * P - K) / S + 1;

  // Output position o maps to input o*S + k - P; iterate o over the valid range.
  auto out_range = [S, P](std::ptrdiff_t k, std::ptrdiff_t in_extent, std::ptrdiff_t out_extent) {
    std::ptrdiff_t off = k - P;
    std::ptrdiff_t lo = off >= 0 ? 0 : (-off + S - 1) / S;
    std::ptrdiff_t hi = in_extent - 1 - off < 0 ? 0 : (in_extent - 1 - off) / S + 1;
    return detail::Range{lo, std::min(hi, out_extent)};
  };

  auto xv = x.data(), wv = w.data();
  std::vector<double> out(O * Ho * Wo, 0.0);
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::ptrdiff_t o = 0; o < O; ++o)
      std::fill(out.begin() + o * Ho * Wo, out.begin() + (o + 1) * Ho * Wo, bv[o]);
  }
  for (std::ptrdiff_t o = 0; o < O; ++o)
    for (std::ptrdiff_t c = 0; c < C; ++c)
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        auto ry = out_range(ky, H, Ho);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          auto rx = out_range(kx, W, Wo);
          const double wk = wv[((o * C + c) * K + ky) * K + kx];
          for (std::ptrdiff_t oy = ry.lo; oy < ry.hi; ++oy) {
            const std::ptrdiff_t xoff = (c * H + oy * S + ky - P) * W + kx - P;
            double* orow = &out[(o * Ho + oy) * Wo];
            for (std::ptrdiff_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wk * xv[xoff + ox * S];
          }
        }
      }

  auto xn = x.node(), wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return detail::make_result(
      Shape{static_cast<std::size_t>(O), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)},
      std::move(out), {&x, &w, &bias}, "conv2d",
      [=](const std::vector<double>& g) {
        const auto& X = *xn->data;
        const auto& Wt = *wn->data;
        double* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        double* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::ptrdiff_t o = 0; o < O; ++o)
            for (std::ptrdiff_t i = 0; i < Ho * Wo; ++i) gb[o] += g[o * Ho * Wo + i];
        }
        for (std::ptrdiff_t o = 0; o < O; ++o)
          for (std::ptrdiff_t c = 0; c < C; ++c)
            for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
              auto ry = out_range(ky, H, Ho);
              for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
                auto rx = out_range(kx, W, Wo);
                const std::size_t widx = ((o * C + c) * K + ky) * K + kx;
                const double wk = Wt[widx];
                double acc = 0.0;
                for (std::ptrdiff_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const std::ptrdiff_t xoff = (c * H + oy * S + ky - P) * W + kx - P;
                  const double* grow = &g[(o * Ho + oy) * Wo];
                  if (gx) {
                    for (std::ptrdiff_t ox = rx.lo; ox < rx.hi; ++ox) gx[xoff + ox * S] += wk * grow[ox];
                  }
                  if (gw) {
                    for (std::ptrdiff_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * X[xoff + ox * S];
                  }
                }
                if (gw) gw[widx] += acc;
              }
            }
      });
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  return conv2d(x, w, Tensor{}, stride, padding);
}

/// x: C x H x W, w: C x O x k x k, bias: O (may be undefined).
/// Output spatial size (H-1)*stride - 2*padding + k.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias,
                               std::size_t stride, std::size_t padding) {
  detail::require_rank(x, 3, "conv_transpose2d");
  detail::require_rank(w, 4, "conv_transpose2d");
  const std::ptrdiff_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::ptrdiff_t O = w.dim(1), K = w.dim(2);
  const std::ptrdiff_t S = stride, P = padding;
  if (static_cast<std::ptrdiff_t>(w.dim(0)) != C || w.dim(3) != w.dim(2)) {
    throw ShapeError("conv_transpose2d: weight " + to_string(w.shape()) +
                     " incompatible with input " + to_string(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || static_cast<std::ptrdiff_t>(bias.dim(0)) != O)) {
    throw ShapeError("conv_transpose2d: bias shape " + to_string(bias.shape()));
  }
  const std::ptrdiff_t Ho = (H - 1) * S - 2 * P + K, Wo = (W - 1) * S - 2 * P + K;
  if (stride == 0 || Ho <= 0 || Wo <= 0) throw ShapeError("conv_transpose2d: empty output");

  auto xv = x.data(), wv = w.data();
  std::vector<double> out(O * Ho * Wo, 0.0);
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::ptrdiff_t o = 0; o < O; ++o)
      std::fill(out.begin() + o * Ho * Wo, out.begin() + (o + 1) * Ho * Wo, bv[o]);
  }
  for (std::ptrdiff_t c = 0; c < C; ++c)
    for (std::ptrdiff_t o = 0; o < O; ++o)
      for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
        auto ry = detail::scatter_range(H, S, ky - P, Ho);
        for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
          auto rx = detail::scatter_range(W, S, kx - P, Wo);
          const double wk = wv[((c * O + o) * K + ky) * K + kx];
          for (std::ptrdiff_t iy = ry.lo; iy < ry.hi; ++iy) {
            const double* xrow = &xv[(c * H + iy) * W];
            const std::ptrdiff_t ooff = (o * Ho + iy * S + ky - P) * Wo + kx - P;
            for (std::ptrdiff_t ix = rx.lo; ix < rx.hi; ++ix) out[ooff + ix * S] += wk * xrow[ix];
          }
        }
      }

  auto xn = x.node(), wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  return detail::make_result(
      Shape{static_cast<std::size_t>(O), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)},
      std::move(out), {&x, &w, &bias}, "conv_transpose2d",
      [=](const std::vector<double>& g) {
        const auto& X = *xn->data;
        const auto& Wt = *wn->data;
        double* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
        double* gw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::ptrdiff_t o = 0; o < O; ++o)
            for (std::ptrdiff_t i = 0; i < Ho * Wo; ++i) gb[o] += g[o * Ho * Wo + i];
        }
        for (std::ptrdiff_t c = 0; c < C; ++c)
          for (std::ptrdiff_t o = 0; o < O; ++o)
            for (std::ptrdiff_t ky = 0; ky < K; ++ky) {
              auto ry = detail::scatter_range(H, S, ky - P, Ho);
              for (std::ptrdiff_t kx = 0; kx < K; ++kx) {
                auto rx = detail::scatter_range(W, S, kx - P, Wo);
                const std::size_t widx = ((c * O + o) * K + ky) * K + kx;
                const double wk = Wt[widx];
                double acc = 0.0;
                for (std::ptrdiff_t iy = ry.lo; iy < ry.hi; ++iy) {
                  const std::ptrdiff_t goff = (o * Ho + iy * S + ky - P) * Wo + kx - P;
                  if (gx) {
                    double* gxrow = gx + (c * H + iy) * W;
                    for (std::ptrdiff_t ix = rx.lo; ix < rx.hi; ++ix) gxrow[ix] += wk * g[goff + ix * S];
                  }
                  if (gw) {
                    const double* xrow = &X[(c * H + iy) * W];
                    for (std::ptrdiff_t ix = rx.lo; ix < rx.hi; ++ix) acc += xrow[ix] * g[goff + ix * S];
                  }
                }
                if (gw) gw[widx] += acc;
              }
            }
      });
}

inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, std::size_t stride,
                               std::size_t padding) {
  return conv_transpose2d(x, w, Tensor{}, stride, padding);
}

// ---- image filters -------------------------------------------------------

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double mid = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    double d = static_cast<double>(i) - mid;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

/// Separable Gaussian filter per channel, "valid" extent: C x (H-w+1) x (W-w+1).
inline Tensor gaussian_blur(const Tensor& a, std::size_t window, double sigma) {
  detail::require_rank(a, 3, "gaussian_blur");
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  if (window == 0 || window > H || window > W) {
    throw ShapeError("gaussian_blur: window " + std::to_string(window) + " exceeds image " +
                     to_string(a.shape()));
  }
  const std::size_t Ho = H - window + 1, Wo = W - window + 1;
  auto taps = gaussian_taps(window, sigma);
  auto av = a.data();
  std::vector<double> tmp(C * H * Wo, 0.0);  // horizontal pass
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < Wo; ++x) {
        double s = 0.0;
        for (std::size_t t = 0; t < window; ++t) s += taps[t] * av[(c * H + y) * W + x + t];
        tmp[(c * H + y) * Wo + x] = s;
      }
  std::vector<double> out(C * Ho * Wo, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t t = 0; t < window; ++t)
        for (std::size_t x = 0; x < Wo; ++x)
          out[(c * Ho + y) * Wo + x] += taps[t] * tmp[(c * H + y + t) * Wo + x];

  auto an = a.node();
  return detail::make_result(Shape{C, Ho, Wo}, std::move(out), {&a}, "gaussian_blur",
                             [an, taps, C, H, W, Ho, Wo, window](const std::vector<double>& g) {
                               std::vector<double> gt(C * H * Wo, 0.0);
                               for (std::size_t c = 0; c < C; ++c)
                                 for (std::size_t y = 0; y < Ho; ++y)
                                   for (std::size_t t = 0; t < window; ++t)
                                     for (std::size_t x = 0; x < Wo; ++x)
                                       gt[(c * H + y + t) * Wo + x] += taps[t] * g[(c * Ho + y) * Wo + x];
                               auto& ga = an->grad_buffer();
                               for (std::size_t c = 0; c < C; ++c)
                                 for (std::size_t y = 0; y < H; ++y)
                                   for (std::size_t x = 0; x < Wo; ++x) {
                                     double v = gt[(c * H + y) * Wo + x];
                                     for (std::size_t t = 0; t < window; ++t)
                                       ga[(c * H + y) * W + x + t] += taps[t] * v;
                                   }
                             });
}

/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
inline Tensor avg_pool2(const Tensor& a) {
  detail::require_rank(a, 3, "avg_pool2");
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  const std::size_t Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw ShapeError("avg_pool2: input too small " + to_string(a.shape()));
  auto av = a.data();
  std::vector<double> out(C * Ho * Wo);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) {
        const double* r0 = &av[(c * H + 2 * y) * W + 2 * x];
        const double* r1 = r0 + W;
        out[(c * Ho + y) * Wo + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  auto an = a.node();
  return detail::make_result(Shape{C, Ho, Wo}, std::move(out), {&a}, "avg_pool2",
                             [an, C, H, W, Ho, Wo](const std::vector<double>& g) {
                               auto& ga = an->grad_buffer();
                               for (std::size_t c = 0; c < C; ++c)
                                 for (std::size_t y = 0; y < Ho; ++y)
                                   for (std::size_t x = 0; x < Wo; ++x) {
                                     double v = 0.25 * g[(c * Ho + y) * Wo + x];
                                     std::size_t base = (c * H + 2 * y) * W + 2 * x;
                                     ga[base] += v;
                                     ga[base + 1] += v;
                                     ga[base + W] += v;
                                     ga[base + W + 1] += v;
                                   }
                             });
}

/// Forward value `replacement`, identity gradient to `a` (straight-through).
inline Tensor straight_through(const Tensor& a, std::span<const double> replacement) {
  if (replacement.size() != a.numel()) throw ShapeError("straight_through: size mismatch");
  auto an = a.node();
  return detail::make_result(a.shape(), std::vector<double>(replacement.begin(), replacement.end()),
                             {&a}, "straight_through", [an](const std::vector<double>& g) {
                               auto& ga = an->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
}

// ---- generic dispatch ----------------------------------------------------

enum class OpKind {
  add, sub, mul, matmul, conv2d, transpose_conv2d, relu, leaky_relu, tanh, sigmoid,
  reshape, pad, mean, sum, square, sqrt, gaussian_blur, avg_pool2
};

struct OpAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  double slope = 0.2;
  Shape shape;
  std::size_t window = 11;
  double sigma = 1.5;
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::conv2d: return "conv2d";
    case OpKind::transpose_conv2d: return "transpose_conv2d";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::reshape: return "reshape";
    case OpKind::pad: return "pad";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::gaussian_blur: return "gaussian_blur";
    case OpKind::avg_pool2: return "avg_pool2";
  }
  return "?";
}

inline Tensor forward_op(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs = {}) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::add: need(2); return add(in[0], in[1]);
    case OpKind::sub: need(2); return sub(in[0], in[1]);
    case OpKind::mul: need(2); return mul(in[0], in[1]);
    case OpKind::matmul: need(2); return matmul(in[0], in[1]);
    case OpKind::conv2d:
      if (in.size() == 3) return conv2d(in[0], in[1], in[2], attrs.stride, attrs.padding);
      need(2);
      return conv2d(in[0], in[1], attrs.stride, attrs.padding);
    case OpKind::transpose_conv2d:
      if (in.size() == 3) return conv_transpose2d(in[0], in[1], in[2], attrs.stride, attrs.padding);
      need(2);
      return conv_transpose2d(in[0], in[1], attrs.stride, attrs.padding);
    case OpKind::relu: need(1); return relu(in[0]);
    case OpKind::leaky_relu: need(1); return leaky_relu(in[0], attrs.slope);
    case OpKind::tanh: need(1); return tanh(in[0]);
    case OpKind::sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::reshape: need(1); return reshape(in[0], attrs.shape);
    case OpKind::pad: need(1); return pad(in[0], attrs.padding);
    case OpKind::mean: need(1); return mean(in[0]);
    case OpKind::sum: need(1); return sum(in[0]);
    case OpKind::square: need(1); return square(in[0]);
    case OpKind::sqrt: need(1); return sqrt(in[0]);
    case OpKind::gaussian_blur: need(1); return gaussian_blur(in[0], attrs.window, attrs.sigma);
    case OpKind::avg_pool2: need(1); return avg_pool2(in[0]);
  }
  throw ShapeError("unknown op");
}

inline Tensor forward_op(OpKind kind, std::initializer_list<Tensor> in, const OpAttrs& attrs = {}) {
  return forward_op(kind, std::span<const Tensor>(in.begin(), in.size()), attrs);
}

}  // namespace latentcodec
