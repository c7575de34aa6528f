#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "demosim/model.hpp"
#include "demosim/optim.hpp"
#include "demosim/rng.hpp"

using namespace demosim;

namespace {

DenseVector random_vector(uint64_t seed, std::size_t n) {
  Rng rng(seed);
  DenseVector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

ReplicatorConfig full_cfg() {
  ReplicatorConfig cfg;
  cfg.scheme = Scheme::Full;
  cfg.compression = 1.0;
  cfg.sign_mode = false;
  return cfg;
}

ReplicatorConfig demo_cfg(std::size_t s, std::size_t k, bool sign) {
  ReplicatorConfig cfg;
  cfg.scheme = Scheme::DeMo;
  cfg.chunk_size = s;
  cfg.top_k = k;
  cfg.compression = static_cast<double>(k) / static_cast<double>(s);
  cfg.sign_mode = sign;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("state allocation follows the optimizer kind") {
  const MomentumState sgd = MomentumState::make(OptimizerKind::DemoSgd, 5);
  CHECK(sgd.m.size() == 5);
  CHECK(sgd.exp_avg.empty());

  const MomentumState adam = MomentumState::make(OptimizerKind::DecoupledAdamW, 5);
  CHECK(adam.m.empty());
  CHECK(adam.exp_avg.size() == 5);
  CHECK(adam.exp_avg_sq.size() == 5);
  CHECK(adam.steps == 0);
}

TEST_CASE("zero decay with a full exchange collapses to plain gradient descent") {
  const std::size_t n = 40;
  const DenseVector grad = random_vector(31, n);
  OptimizerConfig opt;
  opt.momentum_decay = 0.0;
  const double lr = 0.05;

  DenseVector params = random_vector(32, n);
  DenseVector expect = params;

  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, n);
  const EncodeResult enc = demo_sgd_prepare(st, grad, opt, full_cfg(), 0, 0);
  const DenseVector q =
      decode_and_merge(std::vector<CompressedUpdate>{enc.update}, full_cfg());
  demo_sgd_apply(params, q, lr);

  for (std::size_t i = 0; i < n; ++i) expect[i] -= lr * grad[i];
  CHECK(params == expect);
  CHECK(st.m == DenseVector(n, 0.0));  // everything left with the update
}

TEST_CASE("what leaves the momentum is exactly what the wire carried away") {
  const std::size_t n = 96;
  OptimizerConfig opt;
  opt.momentum_decay = 0.9;
  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, n);

  for (bool sign : {false, true}) {
    const ReplicatorConfig rep = demo_cfg(32, 4, sign);
    for (uint64_t step = 0; step < 6; ++step) {
      const DenseVector grad = random_vector(mix_seed(33, step, sign ? 1 : 0), n);
      StepTrace trace;
      demo_sgd_prepare(st, grad, opt, rep, step, 0, &trace);
      REQUIRE(trace.m_accum.size() == n);
      for (std::size_t i = 0; i < n; ++i) {
        // Conservation, in the exact form the update rule computes it.
        CHECK(trace.m_after[i] == trace.m_accum[i] - trace.local_q[i]);
      }
      CHECK(st.m == trace.m_after);
    }
  }
}

TEST_CASE("momentum accumulates geometrically between exchanges") {
  const std::size_t n = 8;
  OptimizerConfig opt;
  opt.momentum_decay = 0.5;
  ReplicatorConfig rep;
  rep.scheme = Scheme::DiLoCo;
  rep.compression = 0.25;  // sync every 4 steps; steps 1..3 share nothing

  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, n);
  const DenseVector g1 = random_vector(34, n);
  const DenseVector g2 = random_vector(35, n);

  StepTrace t1, t2;
  demo_sgd_prepare(st, g1, opt, rep, 1, 0, &t1);
  CHECK(t1.local_q == DenseVector(n, 0.0));
  CHECK(st.m == g1);  // 0.5 * 0 + g1, minus nothing

  demo_sgd_prepare(st, g2, opt, rep, 2, 0, &t2);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(st.m[i] == 0.5 * g1[i] + g2[i]);
  }
}

TEST_CASE("a full band selection flushes the momentum to exact zeros") {
  const std::size_t n = 64;
  OptimizerConfig opt;
  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, n);

  // Seed the momentum with history first.
  demo_sgd_prepare(st, random_vector(36, n), opt, demo_cfg(32, 4, false), 0, 0);
  REQUIRE(st.m != DenseVector(n, 0.0));

  StepTrace trace;
  demo_sgd_prepare(st, random_vector(37, n), opt, demo_cfg(32, 32, false), 1, 0, &trace);
  CHECK(trace.local_q == trace.m_accum);  // full band takes everything
  CHECK(st.m == DenseVector(n, 0.0));
}

TEST_CASE("adamw with a single replica and full exchange equals the baseline") {
  const std::size_t n = 48;
  OptimizerConfig opt;
  opt.kind = OptimizerKind::DecoupledAdamW;
  opt.weight_decay = 0.01;
  const double lr = 0.003;

  DenseVector p_dist = random_vector(38, n);
  DenseVector p_base = p_dist;
  MomentumState st_dist = MomentumState::make(opt.kind, n);
  MomentumState st_base = MomentumState::make(opt.kind, n);

  for (uint64_t step = 0; step < 5; ++step) {
    const DenseVector grad = random_vector(mix_seed(39, step), n);
    const EncodeResult enc = adamw_prepare(grad, full_cfg(), step, 0);
    const DenseVector merged =
        decode_and_merge(std::vector<CompressedUpdate>{enc.update}, full_cfg());
    adamw_apply(p_dist, st_dist, grad, enc.local_q, &merged, opt, lr);
    baseline_adamw_step(p_base, st_base, grad, opt, lr);
  }
  CHECK(p_dist == p_base);
  CHECK(st_dist.exp_avg == st_base.exp_avg);
  CHECK(st_dist.exp_avg_sq == st_base.exp_avg_sq);
}

TEST_CASE("adamw replicas agree exactly on shared coordinates and keep local ones") {
  const std::size_t n = 64;
  OptimizerConfig opt;
  opt.kind = OptimizerKind::DecoupledAdamW;
  const double lr = 0.01;
  ReplicatorConfig rep;
  rep.scheme = Scheme::Random;
  rep.compression = 0.25;
  rep.sign_mode = false;
  rep.seed = 40;

  const DenseVector gA = random_vector(41, n);
  const DenseVector gB = random_vector(42, n);
  const DenseVector p0 = random_vector(43, n);

  const EncodeResult encA = adamw_prepare(gA, rep, 0, 0);
  const EncodeResult encB = adamw_prepare(gB, rep, 0, 0);
  const DenseVector merged = decode_and_merge(
      std::vector<CompressedUpdate>{encA.update, encB.update}, rep);

  DenseVector pA = p0, pB = p0;
  MomentumState stA = MomentumState::make(opt.kind, n);
  MomentumState stB = MomentumState::make(opt.kind, n);
  adamw_apply(pA, stA, gA, encA.local_q, &merged, opt, lr);
  adamw_apply(pB, stB, gB, encB.local_q, &merged, opt, lr);

  const std::vector<uint32_t> idx = selected_indices(rep, 0, 0, n);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool shared = next < idx.size() && idx[next] == i;
    if (shared) ++next;
    if (shared) {
      // Both replicas substituted the same consensus value, so they move in
      // lockstep on shared coordinates.
      CHECK(pA[i] == pB[i]);
      CHECK(merged[i] == (gA[i] + gB[i]) / 2.0);
      // Hand-computed first step: m = (1-b1) g', v = (1-b2) g'^2, and the
      // bias corrections cancel those factors exactly on step one.
      const double g = gA[i] - encA.local_q[i] + merged[i];
      const double m_hat = (1.0 - opt.adam_beta1) * g / (1.0 - opt.adam_beta1);
      const double v_hat = (1.0 - opt.adam_beta2) * g * g / (1.0 - opt.adam_beta2);
      const double want = p0[i] - lr * (m_hat / (std::sqrt(v_hat) + opt.adam_eps));
      CHECK(pA[i] == doctest::Approx(want).epsilon(1e-12));
    } else {
      // Unshared coordinates keep the replica's own gradient.
      CHECK(merged[i] == 0.0);
      const double g = gA[i];
      CHECK(stA.exp_avg[i] == (1.0 - opt.adam_beta1) * g);
      if (gA[i] != gB[i]) CHECK(pA[i] != pB[i]);
    }
  }
}

TEST_CASE("adamw without a merge runs on the raw local gradient") {
  const std::size_t n = 32;
  OptimizerConfig opt;
  opt.kind = OptimizerKind::DecoupledAdamW;
  const double lr = 0.01;
  const DenseVector grad = random_vector(44, n);
  const DenseVector junk = random_vector(45, n);  // must be ignored

  DenseVector pA = random_vector(46, n);
  DenseVector pB = pA;
  MomentumState stA = MomentumState::make(opt.kind, n);
  MomentumState stB = MomentumState::make(opt.kind, n);

  adamw_apply(pA, stA, grad, junk, nullptr, opt, lr);
  baseline_adamw_step(pB, stB, grad, opt, lr);
  CHECK(pA == pB);
}

TEST_CASE("weight decay acts on the parameters, not the gradient path") {
  const std::size_t n = 16;
  OptimizerConfig with_decay;
  with_decay.kind = OptimizerKind::DecoupledAdamW;
  with_decay.weight_decay = 0.1;
  OptimizerConfig no_decay = with_decay;
  no_decay.weight_decay = 0.0;
  const double lr = 0.01;
  const DenseVector grad = random_vector(47, n);
  const DenseVector p0 = random_vector(48, n);

  DenseVector pd = p0, pn = p0;
  MomentumState sd = MomentumState::make(with_decay.kind, n);
  MomentumState sn = MomentumState::make(no_decay.kind, n);
  baseline_adamw_step(pd, sd, grad, with_decay, lr);
  baseline_adamw_step(pn, sn, grad, no_decay, lr);

  CHECK(sd.exp_avg == sn.exp_avg);  // moments see the same gradient
  for (std::size_t i = 0; i < n; ++i) {
    // The decayed parameter is the undecayed one shrunk toward zero.
    CHECK(pd[i] == doctest::Approx(pn[i] - lr * 0.1 * pn[i]).epsilon(1e-12));
  }
}

TEST_CASE("the reference descent loop makes monotone progress on a bowl") {
  Model model;
  model.kind = ModelKind::Quadratic;
  model.layer_dims = {8};
  Batch batch;
  batch.size = 4;
  batch.input_dim = 8;
  batch.inputs = random_vector(49, 32);

  OptimizerConfig opt;
  DenseVector params(8, 0.0);
  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, 8);
  double prev = forward_loss(model, params, batch);
  for (int step = 0; step < 50; ++step) {
    const DenseVector g = gradient(model, params, batch);
    baseline_sgd_step(params, st, g, opt, 0.2);
    const double now = forward_loss(model, params, batch);
    CHECK(now < prev);
    prev = now;
  }
  // The minimizer is the batch mean; fifty contraction steps land on it.
  DenseVector center(8, 0.0);
  for (std::size_t d = 0; d < 8; ++d) {
    for (std::size_t i = 0; i < 4; ++i) center[d] += batch.inputs[i * 8 + d];
    center[d] /= 4.0;
  }
  CHECK(max_abs_diff(params, center) < 1e-3);
}

TEST_CASE("non finite gradients are refused before touching any state") {
  const std::size_t n = 8;
  OptimizerConfig opt;
  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, n);
  DenseVector bad(n, 1.0);
  bad[3] = std::numeric_limits<double>::quiet_NaN();

  CHECK_THROWS_AS(demo_sgd_prepare(st, bad, opt, full_cfg(), 0, 0), TrainingError);
  CHECK(st.m == DenseVector(n, 0.0));  // untouched

  bad[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adamw_prepare(bad, full_cfg(), 0, 0), TrainingError);

  DenseVector short_grad(n - 1, 0.0);
  CHECK_THROWS_AS(demo_sgd_prepare(st, short_grad, opt, full_cfg(), 0, 0), ProtocolError);
}
