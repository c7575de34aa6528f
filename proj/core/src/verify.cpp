#include "demosim/verify.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>

#include "demosim/cluster.hpp"
#include "demosim/config.hpp"
#include "demosim/dataset.hpp"
#include "demosim/model.hpp"
#include "demosim/optim.hpp"
#include "demosim/replicate.hpp"
#include "demosim/rng.hpp"
#include "demosim/trainer.hpp"
#include "demosim/transform.hpp"

namespace demosim {

namespace {

CheckResult pass(const std::string& name, const std::string& detail) {
  return {name, true, detail};
}

CheckResult fail(const std::string& name, const std::string& detail) {
  return {name, false, detail};
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

DenseVector random_vector(Rng& rng, std::size_t n, double scale) {
  DenseVector v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

CheckResult check_gradient_oracle() {
  const char* name = "gradient-oracle";
  Rng rng(mix_seed(7001));
  double worst = 0.0;
  for (int rep = 0; rep < 4; ++rep) {
    Model model;
    Batch batch;
    if (rep == 0) {
      model.kind = ModelKind::Quadratic;
      model.layer_dims = {3};
    } else {
      model.kind = ModelKind::Mlp;
      model.layer_dims = {3, 6, 2};
      model.activation = Activation::Tanh;
      model.loss = rep == 2 ? LossKind::CrossEntropy : LossKind::Mse;
    }
    batch.size = 5;
    batch.input_dim = model.input_dim();
    batch.inputs = random_vector(rng, batch.size * batch.input_dim, 1.0);
    if (model.kind == ModelKind::Mlp && model.loss == LossKind::CrossEntropy) {
      for (std::size_t i = 0; i < batch.size; ++i) {
        batch.labels.push_back(static_cast<int>(i % model.output_dim()));
      }
    } else if (model.kind == ModelKind::Mlp) {
      batch.target_dim = model.output_dim();
      batch.targets = random_vector(rng, batch.size * batch.target_dim, 1.0);
    }
    DenseVector params = init_params(model, 31 + rep, model.param_count());
    if (model.kind == ModelKind::Quadratic) {
      for (double& p : params) p = rng.uniform(-1.0, 1.0);
    }
    const DenseVector analytic = gradient(model, params, batch);
    const DenseVector fd = finite_diff_gradient(model, params, batch, 1e-5);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double rel = std::fabs(analytic[i] - fd[i]) / (std::fabs(fd[i]) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  if (worst < 1e-5) return pass(name, fmt("max relative error %.3g", worst));
  return fail(name, fmt("max relative error %.3g exceeds 1e-5", worst));
}

CheckResult check_chunk_round_trip() {
  const char* name = "chunk-round-trip";
  Rng rng(mix_seed(7002));
  for (std::size_t len = 1; len <= 70; ++len) {
    for (std::size_t s : {1u, 2u, 16u, 32u}) {
      const DenseVector v = random_vector(rng, len, 2.0);
      const ChunkLayout layout = chunk_layout(len, s);
      const std::vector<double> rows = chunk(v, layout);
      for (std::size_t p = len; p < rows.size(); ++p) {
        if (rows[p] != 0.0) return fail(name, "pad position is nonzero");
      }
      const std::vector<double> back = unchunk(rows, layout);
      if (back != v) return fail(name, fmt("round trip differs at length %g", double(len)));
    }
  }
  return pass(name, "lengths 1..70 across chunk sizes {1,2,16,32}");
}

CheckResult check_transform_round_trip(const TransformFn& forward, const TransformFn& inverse) {
  const char* name = "transform-round-trip";
  Rng rng(mix_seed(7003));
  double worst_rt = 0.0;
  double worst_parseval = 0.0;
  for (std::size_t s : {1u, 2u, 16u, 32u, 64u}) {
    for (int rep = 0; rep < 20; ++rep) {
      const DenseVector x = random_vector(rng, s, 3.0);
      const std::vector<double> c = forward(x);
      const std::vector<double> back = inverse(c);
      worst_rt = std::max(worst_rt, max_abs_diff(x, back));
      const double ex = squared_norm(x);
      const double ec = squared_norm(c);
      worst_parseval = std::max(worst_parseval, std::fabs(ex - ec) / (ex + 1e-300));
    }
  }
  if (worst_rt < 1e-9 && worst_parseval < 1e-9) {
    return pass(name, fmt("round trip %.3g, energy drift %.3g", worst_rt, worst_parseval));
  }
  return fail(name, fmt("round trip %.3g, energy drift %.3g (tolerance 1e-9)", worst_rt,
                        worst_parseval));
}

CheckResult check_energy_split() {
  const char* name = "energy-split";
  Rng rng(mix_seed(7004));
  for (int rep = 0; rep < 10; ++rep) {
    const DenseVector v = random_vector(rng, 96, 1.5);
    const Extraction ex = extract_fast_components(v, 32, 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double recon = ex.fast[i] + ex.residual[i];
      if (std::fabs(recon - v[i]) > 1e-9) {
        return fail(name, fmt("fast + residual misses the input by %.3g", recon - v[i]));
      }
    }
    // Orthogonality: selected and discarded frequencies split the energy.
    const double sum = squared_norm(ex.fast) + squared_norm(ex.residual);
    const double total = squared_norm(v);
    if (std::fabs(sum - total) / total > 1e-9) {
      return fail(name, fmt("energy %.17g vs %.17g", sum, total));
    }
  }
  return pass(name, "fast/residual decomposition is exact and orthogonal");
}

CheckResult check_selection_optimality() {
  const char* name = "selection-optimality";
  Rng rng(mix_seed(7005));
  for (int rep = 0; rep < 10; ++rep) {
    const DenseVector v = random_vector(rng, 64, 1.0);
    const std::size_t k = 1 + static_cast<std::size_t>(rng.below(32));
    const Extraction ex = extract_fast_components(v, 32, k);
    for (std::size_t c = 0; c < 2; ++c) {
      const DenseVector coeffs = dct2(std::span<const double>(v.data() + 32 * c, 32));
      double kept_min = 1e300;
      for (std::size_t t = 0; t < k; ++t) {
        kept_min = std::min(kept_min, std::fabs(ex.selection.coeffs[c * k + t]));
      }
      std::size_t larger = 0;
      for (double x : coeffs) {
        if (std::fabs(x) > kept_min) ++larger;
      }
      if (larger > k) return fail(name, "a discarded coefficient beats a kept one");
    }
  }
  return pass(name, "kept coefficients dominate discarded ones in magnitude");
}

namespace {

// Small single-node hybrid run returning per step train losses.
std::vector<double> tiny_run(Scheme scheme, std::size_t top_k, std::size_t nodes) {
  ExperimentConfig cfg;
  cfg.topology.nodes = nodes;
  cfg.topology.accels_per_node = 1;
  cfg.model.kind = ModelKind::Quadratic;
  cfg.model.layer_dims = {64};
  cfg.dataset.kind = DatasetKind::QuadraticTarget;
  cfg.dataset.size = 200;
  cfg.optimizer.kind = OptimizerKind::DemoSgd;
  cfg.optimizer.learning_rate = 0.2;
  cfg.replicator.scheme = scheme;
  cfg.replicator.chunk_size = 32;
  cfg.replicator.top_k = top_k;
  cfg.replicator.compression = static_cast<double>(top_k) / 32.0;
  cfg.replicator.sign_mode = false;
  cfg.steps = 25;
  cfg.batch_size = 8;
  cfg.eval_every = 25;
  cfg.seed = 99;
  RunResult r = run_experiment(cfg);
  std::vector<double> losses;
  for (const StepMetrics& m : r.metrics) losses.push_back(m.train_loss);
  return losses;
}

}  // namespace

CheckResult check_single_group_collapse() {
  const char* name = "single-group-collapse";
  // One node, one accelerator, full exchange: must match the single loop
  // reference exactly.
  ExperimentConfig cfg;
  cfg.topology.nodes = 1;
  cfg.topology.accels_per_node = 1;
  cfg.model.kind = ModelKind::Quadratic;
  cfg.model.layer_dims = {16};
  cfg.dataset.kind = DatasetKind::QuadraticTarget;
  cfg.dataset.size = 100;
  cfg.optimizer.kind = OptimizerKind::DemoSgd;
  cfg.optimizer.learning_rate = 0.3;
  cfg.replicator.scheme = Scheme::Full;
  cfg.replicator.compression = 1.0;
  cfg.replicator.sign_mode = false;
  cfg.steps = 25;
  cfg.batch_size = 4;
  cfg.eval_every = 25;
  cfg.seed = 5;
  validate_config(cfg);

  Trainer trainer(cfg);
  RunResult run;
  trainer.run(run);

  // Reference loop over the same dataset and batch order.
  Dataset ds = make_dataset(cfg.dataset, cfg.seed);
  BatchStream stream(ds.train.size, 1, cfg.batch_size, cfg.seed);
  DenseVector params = init_params(cfg.model, cfg.seed, cfg.model.param_count());
  MomentumState st = MomentumState::make(OptimizerKind::DemoSgd, params.size());
  for (uint64_t step = 0; step < cfg.steps; ++step) {
    const Batch b = stream.batch_for(ds.train, step, 0);
    LossAndGradient lg = loss_and_gradient(cfg.model, params, b);
    if (lg.loss != run.metrics[step].train_loss) {
      return fail(name, fmt("loss diverges from the reference at step %g", double(step)));
    }
    baseline_sgd_step(params, st, lg.grad, cfg.optimizer, lr_at(cfg, step));
  }
  const DenseVector& cluster_params = trainer.cluster().worker_params(0, 0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i] != cluster_params[i]) return fail(name, "parameters differ bitwise");
  }
  return pass(name, "25 steps match the single loop reference bitwise");
}

CheckResult check_full_band_collapse() {
  const char* name = "full-band-collapse";
  const std::vector<double> full = tiny_run(Scheme::Full, 32, 2);
  const std::vector<double> demo = tiny_run(Scheme::DeMo, 32, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    worst = std::max(worst, std::fabs(full[i] - demo[i]));
  }
  if (worst < 1e-9) return pass(name, fmt("max loss gap %.3g over 25 steps", worst));
  return fail(name, fmt("max loss gap %.3g exceeds 1e-9", worst));
}

CheckResult check_byte_ratios() {
  const char* name = "byte-ratios";
  const std::size_t len = 1600;
  Rng rng(mix_seed(7006));
  const DenseVector v = random_vector(rng, len, 1.0);

  ReplicatorConfig demo;
  demo.scheme = Scheme::DeMo;
  demo.chunk_size = 32;
  demo.top_k = 2;
  demo.compression = 2.0 / 32.0;
  ReplicatorConfig rnd;
  rnd.scheme = Scheme::Random;
  rnd.compression = 1.0 / 16.0;
  ReplicatorConfig full;
  full.scheme = Scheme::Full;
  full.compression = 1.0;

  const auto demo_bytes = select_and_encode(v, demo, 0, 0).update.bytes;
  const auto rnd_bytes = select_and_encode(v, rnd, 0, 0).update.bytes;
  const auto full_bytes = select_and_encode(v, full, 0, 0).update.bytes;
  const double dr = static_cast<double>(demo_bytes) / static_cast<double>(rnd_bytes);
  const double fr = static_cast<double>(full_bytes) / static_cast<double>(rnd_bytes);
  char buf[160];
  std::snprintf(buf, sizeof buf, "DeMo/Random = %.3f, Full/Random = %.3f", dr, fr);
  if (dr == 2.0 && fr == 16.0) return pass(name, buf);
  return fail(name, buf);
}

CheckResult check_index_determinism() {
  const char* name = "index-determinism";
  ReplicatorConfig rnd;
  rnd.scheme = Scheme::Random;
  rnd.compression = 0.25;
  rnd.seed = 17;
  ReplicatorConfig str = rnd;
  str.scheme = Scheme::Striding;
  for (uint64_t step = 0; step < 50; ++step) {
    for (uint32_t shard = 0; shard < 3; ++shard) {
      const auto a = selected_indices(rnd, step, shard, 128);
      const auto b = selected_indices(rnd, step, shard, 128);
      if (a != b) return fail(name, "random selection is not reproducible");
      const auto sa = selected_indices(str, step, shard, 128);
      const auto sb = selected_indices(str, step, shard, 128);
      if (sa != sb) return fail(name, "striding selection is not reproducible");
    }
  }
  return pass(name, "selection depends only on (seed, step, shard)");
}

CheckResult check_merge_fidelity() {
  const char* name = "merge-fidelity";
  Rng rng(mix_seed(7007));
  ReplicatorConfig cfg;
  cfg.scheme = Scheme::Full;
  cfg.compression = 1.0;
  cfg.sign_mode = false;
  const std::size_t len = 256;
  std::vector<CompressedUpdate> updates;
  std::vector<DenseVector> inputs;
  for (int rep = 0; rep < 4; ++rep) {
    inputs.push_back(random_vector(rng, len, 1.0));
    updates.push_back(select_and_encode(inputs.back(), cfg, 3, 0).update);
  }
  const DenseVector merged = decode_and_merge(updates, cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const double mean =
        (inputs[0][i] + inputs[1][i] + inputs[2][i] + inputs[3][i]) / 4.0;
    worst = std::max(worst, std::fabs(merged[i] - mean));
  }
  if (worst < 1e-12) return pass(name, fmt("full merge within %.3g of the brute mean", worst));
  return fail(name, fmt("full merge misses the brute mean by %.3g", worst));
}

std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> results;
  results.push_back(check_gradient_oracle());
  results.push_back(check_chunk_round_trip());
  results.push_back(check_transform_round_trip(
      [](std::span<const double> x) { return dct2(x); },
      [](std::span<const double> c) { return idct3(c); }));
  results.push_back(check_energy_split());
  results.push_back(check_selection_optimality());
  results.push_back(check_single_group_collapse());
  results.push_back(check_full_band_collapse());
  results.push_back(check_byte_ratios());
  results.push_back(check_index_determinism());
  results.push_back(check_merge_fidelity());
  return results;
}

int print_report(std::ostream& os, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << '\n';
    all = all && r.pass;
  }
  os << (all ? "all checks passed" : "some checks FAILED") << '\n';
  return all ? 0 : 1;
}

}  // namespace demosim
