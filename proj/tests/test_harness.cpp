#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "demosim/config.hpp"
#include "demosim/dataset.hpp"
#include "demosim/trainer.hpp"
#include "demosim/verify.hpp"

using namespace demosim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory per call; removed by the caller via ScratchDir.
struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const char* tag) {
    path = fs::temp_directory_path() / (std::string("demosim-test-") + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string contains_or_dump(const std::string& haystack, const std::string& needle) {
  if (haystack.find(needle) != std::string::npos) return needle;
  return "MISSING '" + needle + "' in: " + haystack;
}

const char* kSmallRun = R"(
topology.nodes = 2
topology.accels_per_node = 2
model.kind = quadratic
model.dim = 16
dataset.kind = quadratic_target
dataset.size = 200
optimizer.kind = demo_sgd
optimizer.learning_rate = 0.05
replicator.scheme = demo
replicator.chunk_size = 8
replicator.top_k = 2
steps = 30
batch_size = 4
eval_every = 10
seed = 42
)";

}  // namespace

TEST_CASE("a minimal config fills every default and couples the seeds") {
  const ExperimentConfig cfg = parse_config("dataset.kind = quadratic_target\nseed = 77\n");
  CHECK(cfg.topology.nodes == 1);
  CHECK(cfg.topology.accels_per_node == 1);
  CHECK(cfg.topology.mode == ClusterMode::HybridSharded);
  CHECK(cfg.model.kind == ModelKind::Quadratic);
  CHECK(cfg.steps == 200);
  CHECK(cfg.batch_size == 8);
  CHECK(cfg.seed == 77);
  CHECK(cfg.replicator.seed == 77);  // follows the run seed unless set
  CHECK(cfg.dataset.input_dim == cfg.model.input_dim());

  const ExperimentConfig pinned =
      parse_config("dataset.kind = quadratic_target\nseed = 77\nreplicator.seed = 5\n");
  CHECK(pinned.replicator.seed == 5);
  CHECK(pinned.seed == 77);
}

TEST_CASE("comments, blank lines and fractional values parse") {
  const ExperimentConfig cfg = parse_config(R"(
# a comment line
dataset.kind = quadratic_target
model.dim = 64

replicator.scheme = random
replicator.compression = 1/16   # fractions are fine
warmup_fraction = 0.25
)");
  CHECK(cfg.replicator.scheme == Scheme::Random);
  CHECK(cfg.replicator.compression == 1.0 / 16.0);
  CHECK(cfg.warmup_fraction == 0.25);
}

TEST_CASE("the two spectral budget knobs stay coupled") {
  SUBCASE("top_k drives compression") {
    const ExperimentConfig cfg = parse_config(
        "dataset.kind = quadratic_target\nreplicator.scheme = demo\n"
        "replicator.chunk_size = 32\nreplicator.top_k = 8\n");
    CHECK(cfg.replicator.top_k == 8);
    CHECK(cfg.replicator.compression == 0.25);
  }
  SUBCASE("compression alone derives top_k") {
    const ExperimentConfig cfg = parse_config(
        "dataset.kind = quadratic_target\nreplicator.scheme = demo\n"
        "replicator.chunk_size = 32\nreplicator.compression = 1/8\n");
    CHECK(cfg.replicator.top_k == 4);
    CHECK(cfg.replicator.compression == 0.125);
  }
  SUBCASE("when both appear, top_k wins") {
    const ExperimentConfig cfg = parse_config(
        "dataset.kind = quadratic_target\nreplicator.scheme = demo\n"
        "replicator.chunk_size = 32\nreplicator.top_k = 2\n"
        "replicator.compression = 0.5\n");
    CHECK(cfg.replicator.top_k == 2);
    CHECK(cfg.replicator.compression == 0.0625);
  }
  SUBCASE("full scheme implies everything moves") {
    const ExperimentConfig cfg =
        parse_config("dataset.kind = quadratic_target\nreplicator.scheme = full\n");
    CHECK(cfg.replicator.compression == 1.0);
    CHECK(effective_compression(cfg) == 1.0);
  }
}

TEST_CASE("every violation is reported in one pass") {
  try {
    parse_config(
        "dataset.kind = quadratic_target\n"
        "optimizer.learning_rate = -1\n"
        "warmup_fraction = 3\n"
        "replicator.compression = 0\n"
        "nonsense here\n"
        "no.such.key = 1\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(contains_or_dump(msg, "learning_rate") == "learning_rate");
    CHECK(contains_or_dump(msg, "warmup_fraction") == "warmup_fraction");
    CHECK(contains_or_dump(msg, "line 5") == "line 5");
    CHECK(contains_or_dump(msg, "unknown key 'no.such.key'") == "unknown key 'no.such.key'");
  }
}

TEST_CASE("an indivisible model with padding disabled names both quantities") {
  try {
    parse_config(
        "dataset.kind = quadratic_target\nmodel.kind = quadratic\nmodel.dim = 7\n"
        "topology.accels_per_node = 2\nmodel.pad_params = false\nbatch_size = 1\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(contains_or_dump(msg, "param_count 7") == "param_count 7");
    CHECK(contains_or_dump(msg, "accels_per_node 2") == "accels_per_node 2");
  }
  // The same shape with padding on is fine.
  const ExperimentConfig ok = parse_config(
      "dataset.kind = quadratic_target\nmodel.kind = quadratic\nmodel.dim = 7\n"
      "topology.accels_per_node = 2\nbatch_size = 1\n");
  CHECK(padded_param_len(ok) == 8);
}

TEST_CASE("model and dataset pairings are enforced") {
  CHECK_THROWS_AS(parse_config("dataset.kind = gaussian_blobs\nmodel.kind = quadratic\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("dataset.kind = quadratic_target\nmodel.kind = mlp\n"
                               "model.layer_dims = 4,8,2\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("dataset.kind = gaussian_blobs\nmodel.kind = mlp\n"
                               "model.layer_dims = 4,8,2\nmodel.loss = mse\n"),
                  ConfigError);
  CHECK_NOTHROW(parse_config("dataset.kind = gaussian_blobs\nmodel.kind = mlp\n"
                             "model.layer_dims = 4,8,2\nmodel.loss = cross_entropy\n"));
  CHECK_NOTHROW(parse_config("dataset.kind = linear_regression\nmodel.kind = mlp\n"
                             "model.layer_dims = 4,3\nmodel.loss = mse\n"));
}

TEST_CASE("missing config files are config errors") {
  CHECK_THROWS_AS(load_config("/nonexistent/surely/missing.cfg"), ConfigError);
}

TEST_CASE("datasets are seeded, shaped and split deterministically") {
  DatasetSpec spec;
  spec.kind = DatasetKind::GaussianBlobs;
  spec.size = 50;
  spec.input_dim = 4;
  spec.output_dim = 3;

  const Dataset a = make_dataset(spec, 9);
  const Dataset b = make_dataset(spec, 9);
  CHECK(a.train.inputs == b.train.inputs);
  CHECK(a.val.inputs == b.val.inputs);
  CHECK(a.train.labels == b.train.labels);

  const Dataset c = make_dataset(spec, 10);
  CHECK(a.train.inputs != c.train.inputs);

  CHECK(a.train.size == 40);  // 80/20 split
  CHECK(a.val.size == 10);
  CHECK(a.train.inputs.size() == 40 * 4);
  CHECK(a.train.labels.size() == 40);
  for (int label : a.train.labels) {
    CHECK(label >= 0);
    CHECK(label < 3);
  }

  DatasetSpec tiny = spec;
  tiny.size = 5;
  CHECK_THROWS_AS(make_dataset(tiny, 9), ConfigError);
}

TEST_CASE("regression targets come exactly from the hidden generating map") {
  DatasetSpec spec;
  spec.kind = DatasetKind::LinearRegression;
  spec.size = 60;
  spec.input_dim = 5;
  spec.output_dim = 3;
  spec.noise = 0.0;

  const Dataset ds = make_dataset(spec, 33);
  REQUIRE(ds.gen_params.size() == 3 * 5 + 3);

  // A single linear layer with the generating parameters reproduces every
  // target bitwise, so its mean squared error is exactly zero.
  Model probe;
  probe.kind = ModelKind::Mlp;
  probe.layer_dims = {5, 3};
  probe.loss = LossKind::Mse;
  CHECK(forward_loss(probe, ds.gen_params, ds.train) == 0.0);
  CHECK(forward_loss(probe, ds.gen_params, ds.val) == 0.0);

  // With noise the fit is no longer exact, but stays within the noise floor.
  DatasetSpec noisy = spec;
  noisy.noise = 0.01;
  const Dataset nds = make_dataset(noisy, 33);
  const double l = forward_loss(probe, nds.gen_params, nds.val);
  CHECK(l > 0.0);
  CHECK(l < 3 * 0.01 * 0.01);  // ~ output_dim/2 * noise^2, generously bounded
}

TEST_CASE("batch windows are disjoint per step and invariant to the world split") {
  const std::size_t train = 160;
  const uint64_t seed = 5;

  const BatchStream split(train, 2, 8, seed);
  const BatchStream merged(train, 1, 16, seed);

  for (uint64_t step = 0; step < 25; ++step) {
    const std::vector<std::size_t> r0 = split.indices_for(step, 0);
    const std::vector<std::size_t> r1 = split.indices_for(step, 1);

    std::set<std::size_t> seen(r0.begin(), r0.end());
    for (std::size_t i : r1) CHECK(seen.insert(i).second);  // disjoint ranks

    // Two ranks of eight, concatenated, are one rank of sixteen.
    std::vector<std::size_t> joined = r0;
    joined.insert(joined.end(), r1.begin(), r1.end());
    CHECK(joined == merged.indices_for(step, 0));
  }

  // Same permutation for the same seed, a different one otherwise.
  CHECK(BatchStream(train, 2, 8, seed).indices_for(0, 0) == split.indices_for(0, 0));
  CHECK(BatchStream(train, 2, 8, seed + 1).indices_for(0, 0) != split.indices_for(0, 0));

  CHECK_THROWS_AS(BatchStream(10, 2, 8, seed), ConfigError);  // 16 > 10
}

TEST_CASE("a run reports one complete metrics row per step") {
  const ExperimentConfig cfg = parse_config(kSmallRun);
  RunResult out;
  Trainer trainer(cfg);
  trainer.run(out);

  CHECK(out.steps_completed == 30);
  REQUIRE(out.metrics.size() == 30);
  REQUIRE(out.traffic.size() == 30);

  double prev_time = 0.0;
  for (std::size_t i = 0; i < out.metrics.size(); ++i) {
    const StepMetrics& m = out.metrics[i];
    CHECK(m.step == i);
    CHECK(std::isfinite(m.train_loss));
    CHECK(m.sim_time_s > prev_time);  // compute time alone keeps it moving
    prev_time = m.sim_time_s;
    const bool eval_step = (i + 1) % cfg.eval_every == 0 || i + 1 == cfg.steps;
    CHECK(m.val_loss.has_value() == eval_step);
    CHECK(m.intra_bytes == out.traffic[i].intra_bytes);
    CHECK(m.inter_bytes == out.traffic[i].inter_bytes);
  }
  CHECK(out.final_train_loss == out.metrics.back().train_loss);
  CHECK(out.total_sim_time_s == out.metrics.back().sim_time_s);

  // Descent actually happened on the bowl.
  CHECK(out.final_train_loss < out.metrics.front().train_loss);
}

TEST_CASE("reruns of one config produce byte-identical artifacts") {
  const ExperimentConfig cfg = parse_config(kSmallRun);
  ScratchDir scratch("rerun");

  const RunResult a = run_experiment(cfg);
  const RunResult b = run_experiment(cfg);
  write_run_outputs(cfg, a, (scratch.path / "a").string());
  write_run_outputs(cfg, b, (scratch.path / "b").string());

  for (const char* name : {"metrics.csv", "ledger.csv", "summary.json"}) {
    CHECK(slurp(scratch.path / "a" / name) == slurp(scratch.path / "b" / name));
  }
  // And the metrics file really carries the run, not placeholders.
  const std::string metrics = slurp(scratch.path / "a" / "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 31);  // header + 30 rows
  CHECK(contains_or_dump(metrics, "step,train_loss,val_loss,intra_bytes,inter_bytes,sim_time_s")
        == "step,train_loss,val_loss,intra_bytes,inter_bytes,sim_time_s");
}

TEST_CASE("a sweep keeps going past a failing point and records it") {
  ExperimentConfig base = parse_config(kSmallRun);
  base.steps = 10;
  // Random keeps the compression knob as given; the spectral scheme would
  // round a bad value up to one coefficient and rescue the failing point.
  base.replicator.scheme = Scheme::Random;
  validate_config(base);
  ScratchDir scratch("sweep");

  const SweepResult sweep = run_sweep(base, "compression",
                                      {"1/8", "0", "1/4"}, scratch.path.string());
  REQUIRE(sweep.points.size() == 3);
  CHECK(sweep.points[0].ok);
  CHECK(!sweep.points[1].ok);  // compression 0 is out of range
  CHECK(contains_or_dump(sweep.points[1].error, "compression") == "compression");
  CHECK(sweep.points[2].ok);
  CHECK(sweep.points[0].result.steps_completed == 10);

  // Slashes in axis values are sanitized into directory-safe names.
  CHECK(fs::exists(scratch.path / "compression-1_8" / "metrics.csv"));
  CHECK(fs::exists(scratch.path / "sweep.csv"));
  const std::string csv = slurp(scratch.path / "sweep.csv");
  CHECK(contains_or_dump(csv, "failed") == "failed");

  // Aggregate byte totals scale with the exchanged fraction.
  CHECK(sweep.points[2].result.total_inter_bytes ==
        2 * sweep.points[0].result.total_inter_bytes);

  // An unknown axis fails every point rather than crashing the sweep driver.
  const SweepResult bad = run_sweep(base, "does_not_exist", {"1"}, scratch.path.string());
  REQUIRE(bad.points.size() == 1);
  CHECK(!bad.points[0].ok);
  CHECK(contains_or_dump(bad.points[0].error, "unknown sweep axis") == "unknown sweep axis");
}

TEST_CASE("warmup ramps the learning rate linearly, then holds it") {
  ExperimentConfig cfg = parse_config(kSmallRun);
  cfg.steps = 100;
  cfg.optimizer.learning_rate = 0.05;
  cfg.warmup_fraction = 0.1;  // ten warmup steps

  CHECK(lr_at(cfg, 0) == 0.05 * 1.0 / 10.0);
  CHECK(lr_at(cfg, 4) == 0.05 * 5.0 / 10.0);
  CHECK(lr_at(cfg, 9) == 0.05);
  CHECK(lr_at(cfg, 50) == 0.05);

  cfg.warmup_fraction = 0.0;
  CHECK(lr_at(cfg, 0) == 0.05);
}

TEST_CASE("a deliberately broken transform fails the round trip check") {
  // Control: the real pair passes.
  const TransformFn fwd = [](std::span<const double> x) { return dct2(x); };
  const TransformFn inv = [](std::span<const double> c) { return idct3(c); };
  CHECK(check_transform_round_trip(fwd, inv).pass);

  // A transform that drops energy in one coefficient must be caught.
  const TransformFn broken_fwd = [](std::span<const double> x) {
    std::vector<double> c = dct2(x);
    if (!c.empty()) c[0] *= 1.0000001;
    return c;
  };
  CHECK(!check_transform_round_trip(broken_fwd, inv).pass);

  // So must an inverse that is not the transpose.
  const TransformFn broken_inv = [](std::span<const double> c) {
    std::vector<double> x = idct3(c);
    if (x.size() > 1) std::swap(x[0], x[1]);
    return x;
  };
  CHECK(!check_transform_round_trip(fwd, broken_inv).pass);
}

TEST_CASE("the classification task trains to a useful validation loss") {
  const ExperimentConfig cfg = parse_config(R"(
topology.nodes = 2
topology.accels_per_node = 1
model.kind = mlp
model.layer_dims = 6,16,3
model.loss = cross_entropy
dataset.kind = gaussian_blobs
dataset.size = 300
optimizer.kind = demo_sgd
optimizer.learning_rate = 0.05
replicator.scheme = demo
replicator.chunk_size = 16
replicator.top_k = 4
replicator.sign = off
steps = 300
batch_size = 8
eval_every = 50
seed = 7
)");
  const RunResult out = run_experiment(cfg);
  REQUIRE(out.steps_completed == 300);
  // Random three-way guessing sits at log(3) ~ 1.0986.
  const double first_eval = *out.metrics[49].val_loss;
  CHECK(out.final_val_loss < first_eval);
  CHECK(out.final_val_loss < 0.5);
}
