#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "latentcodec/admm.hpp"
#include "support/admm_problems.hpp"
#include "support/test_util.hpp"

using namespace latentcodec;
using namespace latentcodec::testing;

namespace {

AdmmConfig sgd_config(double step, std::size_t iters, std::size_t inner) {
  AdmmConfig c;
  c.optimizer = OptimizerKind::sgd;
  c.step_size = step;
  c.admm_iters = iters;
  c.inner_steps = inner;
  c.init = InitKind::given;
  return c;
}

// F = sum (z - t)^2 for a scalar or vector target.
LatentObjective sum_sq(std::vector<double> t) {
  Tensor tt = Tensor::vector(std::move(t));
  return [tt](const Tensor& z) { return sum(square(sub(z, tt))); };
}

bool in_codebook(const std::vector<double>& v, const Codebook& cb) {
  for (double x : v)
    if (std::find(cb.centers.begin(), cb.centers.end(), x) == cb.centers.end()) return false;
  return true;
}

}  // namespace

TEST(LatentSearch, IdentityGeneratorRecoversTarget) {
  std::mt19937_64 rng(1);
  auto p = identity_problem(8, rng);
  auto r = latent_search(p.objective, std::vector<double>(8, 0.0), sgd_config(1.0, 30, 10));
  EXPECT_LT(r.final_loss(), 1e-8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.z[i], p.t[static_cast<Eigen::Index>(i)], 1e-4);
}

TEST(LatentSearch, AdamIdentityGetsClose) {
  std::mt19937_64 rng(2);
  auto p = identity_problem(8, rng);
  AdmmConfig c;
  c.admm_iters = 60;
  auto r = latent_search(p.objective, std::vector<double>(8, 0.0), c);
  EXPECT_LT(r.final_loss(), 1e-6);
}

TEST(LatentSearch, AffineMatchesNormalEquations) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = affine_problem(8, 4, rng);
    auto r = latent_search(p.objective, std::vector<double>(4, 0.0), sgd_config(1.0 / p.lipschitz(), 500, 10));
    auto ls = p.least_squares();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.z[i], ls[static_cast<Eigen::Index>(i)], 1e-4);
  }
}

TEST(LatentSearch, TraceIsNonIncreasingAndTargetStopsEarly) {
  std::mt19937_64 rng(4);
  auto p = affine_problem(12, 6, rng);
  AdmmConfig c;
  c.step_size = 0.3;  // large enough that backoff has to engage
  auto r = latent_search(p.objective, std::vector<double>(6, 0.0), c);
  ASSERT_EQ(r.loss_trace.size(), r.steps + 1);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) EXPECT_LE(r.loss_trace[i], r.loss_trace[i - 1]);
  EXPECT_LE(r.final_loss(), r.initial_loss());
  double target = r.loss_trace[20];
  auto early = latent_search(p.objective, std::vector<double>(6, 0.0), c, target);
  EXPECT_LE(early.steps, 20u);
  EXPECT_LE(early.final_loss(), target);
}

TEST(LatentSearch, DivergenceReportsIteration) {
  set_finite_checks(true);
  LatentObjective f = [](const Tensor& z) { return sum(pow(z, 0.5)); };  // NaN for negative z
  try {
    latent_search(f, std::vector<double>{-1.0}, AdmmConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(ZUpdate, ClosedFormQuadratic) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 1);
  auto cb = toy_codebook();
  for (double mu : {0.01, 0.1, 1.0, 10.0}) {
    std::vector<double> t(5), z0(5), eta(5);
    for (std::size_t i = 0; i < 5; ++i) t[i] = nd(rng), z0[i] = nd(rng), eta[i] = 0.3 * nd(rng);
    AdmmConfig c = sgd_config(1.0 / (2.0 + mu), 1, 200);
    c.mu = mu;
    AdmmState s = init_state(z0, cb, c);
    s.eta = eta;
    z_update(s, sum_sq(t), c);
    for (std::size_t i = 0; i < 5; ++i) {
      double expected = (2 * t[i] + mu * (s.u[i] - eta[i])) / (2 + mu);
      EXPECT_NEAR(s.z[i], expected, 1e-10) << "mu " << mu;
    }
  }
}

TEST(ZUpdate, VanishingMuIsPlainSearch) {
  std::mt19937_64 rng(6);
  auto p = affine_problem(8, 4, rng);
  AdmmConfig c;
  c.mu = 1e-300;
  c.inner_steps = 10;
  AdmmState s = init_state(std::vector<double>(4, 0.2), toy_codebook(), c);
  s.eta = {0.5, -0.5, 0.1, 0.0};
  z_update(s, p.objective, c);
  AdmmConfig plain = c;
  plain.admm_iters = 1;
  auto r = latent_search(p.objective, std::vector<double>(4, 0.2), plain);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.z[i], r.z[i], 1e-12);
}

TEST(ZUpdate, ZeroResidualAddsNoProximalGradient) {
  std::mt19937_64 rng(7);
  auto p = affine_problem(8, 4, rng);
  auto cb = toy_codebook();
  AdmmConfig c;
  c.mu = 3.7;
  AdmmState s = init_state({-1.0, 0.4, 1.2, -0.3}, cb, c);  // already in S, so u == z
  auto prox = proximal_objective(p.objective, s);
  Tensor z1 = Tensor::variable({4}, s.z), z2 = Tensor::variable({4}, s.z);
  auto g1 = backward(prox(z1))[z1].to_vector();
  auto g2 = backward(p.objective(z2))[z2].to_vector();
  EXPECT_EQ(g1, g2);
}

TEST(ZUpdate, ProximalObjectiveNonIncreasing) {
  std::mt19937_64 rng(8);
  auto p = affine_problem(10, 5, rng);
  AdmmConfig c;
  c.step_size = 0.5;
  c.inner_steps = 40;
  AdmmState s = init_state(std::vector<double>(5, 0.0), toy_codebook(), c);
  s.eta = {0.2, 0.1, -0.3, 0.0, 0.4};
  auto prox = proximal_objective(p.objective, s);
  std::vector<double> trace;
  std::vector<double> z = s.z;
  OptimizerState opt;
  opt.reset(c.optimizer, z.size());
  detail::descend(prox, z, opt, c.inner_steps, c.step_size, c.max_backoff, &trace);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(UUpdate, Examples) {
  Codebook cb{{-1.0, 1.0}, {}};
  AdmmState s;
  s.z = {0.6};
  s.eta = {0.6};
  u_update(s, cb);
  EXPECT_EQ(s.u, std::vector<double>{1.0});
  s.z = {-1.5};
  s.eta = {0.5};
  u_update(s, cb);
  EXPECT_EQ(s.u, std::vector<double>{-1.0});
}

TEST(UUpdate, ExhaustiveNearestCenter) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd(0, 1.5);
  Codebook cb = toy_codebook();
  for (int trial = 0; trial < 200; ++trial) {
    AdmmState s;
    s.z.resize(16);
    s.eta.resize(16);
    for (std::size_t i = 0; i < 16; ++i) s.z[i] = nd(rng), s.eta[i] = 0.3 * nd(rng);
    auto q = u_update(s, cb);
    ASSERT_TRUE(in_codebook(s.u, cb));
    for (std::size_t i = 0; i < 16; ++i) {
      double w = s.z[i] + s.eta[i], best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t j = 0; j < cb.k(); ++j)
        if (std::abs(w - cb.centers[j]) < best) best = std::abs(w - cb.centers[j]), arg = j;
      EXPECT_EQ(s.u[i], cb.centers[arg]);
      EXPECT_EQ(q.indices[i], arg);
    }
  }
}

TEST(EtaUpdate, ExamplesAndExactIdentity) {
  AdmmState s;
  s.z = {1.5};
  s.u = {1.0};
  s.eta = {0.0};
  eta_update(s);
  EXPECT_EQ(s.eta, std::vector<double>{0.5});
  s.z = s.u = {0.25};
  eta_update(s);
  EXPECT_EQ(s.eta, std::vector<double>{0.5});

  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd(0, 1);
  s.z.resize(100);
  s.u.resize(100);
  s.eta.resize(100);
  for (std::size_t i = 0; i < 100; ++i) s.z[i] = nd(rng), s.u[i] = nd(rng), s.eta[i] = nd(rng);
  auto before = s.eta;
  eta_update(s);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(s.eta[i], before[i] + (s.z[i] - s.u[i]));
}

TEST(Admm, ThreeIterationHandTranscript) {
  // F = (z - 0.9)^2, cb {-1, 1}, mu 0.5, one SGD step of 0.1 per z-update, z0 = 0.
  Codebook cb{{-1.0, 1.0}, {}};
  AdmmConfig c = sgd_config(0.1, 3, 1);
  c.mu = 0.5;
  AdmmState s = init_state({0.0}, cb, c);
  EXPECT_EQ(s.u[0], -1.0);  // tie at 0 goes to the lower center
  auto f = sum_sq({0.9});
  const double expect_z[3] = {0.13, 0.371, 0.3832};
  const double expect_u[3] = {1.0, -1.0, 1.0};
  const double expect_eta[3] = {-0.87, 0.501, -0.1158};
  for (int k = 0; k < 3; ++k) {
    z_update(s, f, c);
    u_update(s, cb);
    eta_update(s);
    EXPECT_NEAR(s.z[0], expect_z[k], 1e-12) << "iteration " << k + 1;
    EXPECT_EQ(s.u[0], expect_u[k]);
    EXPECT_NEAR(s.eta[0], expect_eta[k], 1e-12);
  }
}

TEST(Admm, ScalarProblemSettlesOnNearestCenter) {
  Codebook cb{{-1.0, 1.0}, {}};
  AdmmConfig c;
  c.init = InitKind::given;
  auto r = admm_quantized_search(sum_sq({0.9}), {0.0}, cb, c);
  EXPECT_EQ(r.u_final, std::vector<double>{1.0});
  EXPECT_EQ(r.indices, std::vector<std::uint8_t>{1});
}

TEST(Admm, QuantizedFixedPointStopsAfterOneIteration) {
  Codebook cb{{-1.0, 1.0}, {}};
  AdmmConfig c;
  auto r = admm_quantized_search(sum_sq({1.0, -1.0}), {1.0, -1.0}, cb, c);
  EXPECT_EQ(r.report.admm_iterations, 1u);
  EXPECT_EQ(r.report.residual_trace[0], 0.0);
  EXPECT_EQ(r.u_final, (std::vector<double>{1.0, -1.0}));
}

TEST(Admm, ResidualConvergesForEveryMu) {
  auto cb = toy_codebook();
  std::mt19937_64 rng(11);
  for (double mu : {0.01, 0.1, 1.0, 10.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      for (bool affine : {false, true}) {
        auto p = affine ? affine_problem(8, 4, rng) : identity_problem(8, rng);
        // Plain gradient steps at 1/L make each z-update near exact, as ADMM assumes.
        AdmmConfig c = sgd_config(1.0 / p.lipschitz(), 100, 10);
        c.mu = mu;
        auto r = admm_quantized_search(p.objective, std::vector<double>(p.dim, 0.0), cb, c);
        EXPECT_LT(r.report.residual_trace.back(), 1e-3)
            << "mu " << mu << (affine ? " affine" : " identity") << " trial " << trial;
        EXPECT_LE(r.report.admm_iterations, 100u);
      }
    }
  }
}

TEST(Admm, AdamResidualUsuallyConverges) {
  auto cb = toy_codebook();
  std::mt19937_64 rng(15);
  int converged = 0, total = 0;
  for (double mu : {0.1, 1.0}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto p = identity_problem(8, rng);
      AdmmConfig c;
      c.mu = mu;
      c.admm_iters = 100;
      auto r = admm_quantized_search(p.objective, std::vector<double>(p.dim, 0.0), cb, c);
      converged += r.report.residual_trace.back() < 1e-3;
      ++total;
    }
  }
  EXPECT_GE(converged, total - 1);
}

TEST(Admm, NeverWorseThanQuantizedInitAndDeterministic) {
  std::mt19937_64 rng(12);
  auto cb = toy_codebook();
  for (int trial = 0; trial < 5; ++trial) {
    auto p = affine_problem(16, 6, rng);
    LatentObjective f = [inner = p.objective](const Tensor& z) { return inner(tanh(scale(z, 1.3))); };
    std::vector<double> z0 = to_std(Eigen::VectorXd::Random(6));
    AdmmConfig c;
    auto a = admm_quantized_search(f, z0, cb, c);
    auto b = admm_quantized_search(f, z0, cb, c);
    EXPECT_EQ(a.indices, b.indices);
    EXPECT_TRUE(in_codebook(a.u_final, cb));
    EXPECT_EQ(dequantize(a.indices, cb), a.u_final);
    double init_loss = detail::evaluate(f, quantize_project(z0, cb).values);
    EXPECT_EQ(a.report.initial_quantized_loss, init_loss);
    EXPECT_LE(a.report.final_loss, init_loss);
    EXPECT_EQ(a.report.final_loss, detail::evaluate(f, a.u_final));
    EXPECT_LE(a.report.refinement_passes, c.admm_iters);
    EXPECT_EQ(a.report.residual_trace.size(), a.report.admm_iterations);
  }
}

TEST(Admm, MuIncreasesWhenResidualStalls) {
  auto cb = toy_codebook();
  std::mt19937_64 rng(13);
  auto p = identity_problem(8, rng);
  AdmmConfig c;
  c.mu = 0.01;
  c.admm_iters = 40;
  c.stop_tol = 0;
  auto r = admm_quantized_search(p.objective, std::vector<double>(8, 0.0), cb, c);
  EXPECT_GT(r.report.mu_trace.back(), 0.01);
  for (std::size_t i = 1; i < r.report.mu_trace.size(); ++i) EXPECT_GE(r.report.mu_trace[i], r.report.mu_trace[i - 1]);
  EXPECT_NE(r.report.to_log().find("# admm_iterations"), std::string::npos);
}

TEST(Admm, SetMuKeepsScaledDualConsistent) {
  AdmmState s;
  s.mu = 0.1;
  s.eta = {1.0, -2.0};
  set_mu(s, 0.15);
  EXPECT_NEAR(s.eta[0] * 0.15, 0.1, 1e-15);
  EXPECT_NEAR(s.eta[1] * 0.15, -0.2, 1e-15);
}

TEST(Admm, ConfigValidation) {
  AdmmConfig c;
  c.mu = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.inner_steps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.admm_iters = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Admm, BundleSearchOnToyModel) {
  auto bundle = make_bundle(ArchConfig::image(8), 21, false);
  std::mt19937_64 rng(14);
  Tensor x = generator_forward(bundle, random_tensor({8}, rng));
  LossSpec spec = LossSpec::image();
  AdmmConfig c;
  c.admm_iters = 4;
  c.inner_steps = 5;
  auto s = latent_search(bundle, x, spec, c);
  EXPECT_LE(s.final_loss(), s.initial_loss());
  Codebook cb{{-0.8, -0.2, 0.2, 0.8}, {}};
  auto r = admm_quantized_search(bundle, x, spec, cb, c);
  auto [q, base] = encode_quantize_baseline(bundle, x, spec, cb);
  EXPECT_LE(r.report.final_loss, base);
  EXPECT_EQ(r.indices.size(), 8u);
  c.init = InitKind::given;
  std::vector<double> bad(7, 0.0);
  EXPECT_THROW(admm_quantized_search(bundle, x, spec, cb, c, &bad), ShapeError);
  EXPECT_THROW(latent_search(bundle, Tensor::zeros({1, 16, 16}), spec, c), ShapeError);
}
