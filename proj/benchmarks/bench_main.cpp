// Microbenchmarks for the hot paths: the spectral transform, component
// selection, wire encoding per scheme, group merging, and a whole simulated
// cluster step.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "demosim/cluster.hpp"
#include "demosim/optim.hpp"
#include "demosim/replicate.hpp"
#include "demosim/rng.hpp"
#include "demosim/transform.hpp"
#include "demosim/vec.hpp"

using namespace demosim;

namespace {

DenseVector random_vector(uint64_t seed, std::size_t n) {
  Rng rng(seed);
  DenseVector v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void BM_DctForward(benchmark::State& state) {
  const std::size_t s = static_cast<std::size_t>(state.range(0));
  const DenseVector x = random_vector(1, s);
  std::vector<double> out(s);
  const DctPlan& plan = dct_plan(s);
  for (auto _ : state) {
    plan.forward(x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(s));
}
BENCHMARK(BM_DctForward)->Arg(32)->Arg(128)->Arg(256)->Arg(1024);

void BM_DctRoundTrip(benchmark::State& state) {
  const std::size_t s = static_cast<std::size_t>(state.range(0));
  const DenseVector x = random_vector(2, s);
  std::vector<double> coeffs(s), back(s);
  const DctPlan& plan = dct_plan(s);
  for (auto _ : state) {
    plan.forward(x, coeffs);
    plan.inverse(coeffs, back);
    benchmark::DoNotOptimize(back.data());
  }
}
BENCHMARK(BM_DctRoundTrip)->Arg(32)->Arg(256);

void BM_ExtractFastComponents(benchmark::State& state) {
  const std::size_t len = static_cast<std::size_t>(state.range(0));
  const std::size_t top_k = static_cast<std::size_t>(state.range(1));
  const DenseVector v = random_vector(3, len);
  for (auto _ : state) {
    Extraction e = extract_fast_components(v, 32, top_k);
    benchmark::DoNotOptimize(e.fast.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(len));
}
BENCHMARK(BM_ExtractFastComponents)->Args({4096, 2})->Args({4096, 8})->Args({65536, 4});

ReplicatorConfig scheme_config(Scheme scheme) {
  ReplicatorConfig cfg;
  cfg.scheme = scheme;
  cfg.chunk_size = 32;
  cfg.top_k = 2;
  cfg.compression = 1.0 / 16.0;
  cfg.sign_mode = true;
  cfg.seed = 7;
  if (scheme == Scheme::Full) {
    cfg.sign_mode = false;
    cfg.compression = 1.0;
  }
  return cfg;
}

void BM_SelectAndEncode(benchmark::State& state) {
  const Scheme scheme = static_cast<Scheme>(state.range(0));
  const ReplicatorConfig cfg = scheme_config(scheme);
  const DenseVector v = random_vector(4, 16384);
  uint64_t step = 0;
  for (auto _ : state) {
    EncodeResult r = select_and_encode(v, cfg, step++, 0);
    benchmark::DoNotOptimize(r.update.values.data());
  }
}
BENCHMARK(BM_SelectAndEncode)
    ->Arg(static_cast<int>(Scheme::DeMo))
    ->Arg(static_cast<int>(Scheme::Random))
    ->Arg(static_cast<int>(Scheme::Striding))
    ->Arg(static_cast<int>(Scheme::Full));

void BM_SerializeRoundTrip(benchmark::State& state) {
  const ReplicatorConfig cfg = scheme_config(Scheme::DeMo);
  const DenseVector v = random_vector(5, 16384);
  const EncodeResult enc = select_and_encode(v, cfg, 0, 0);
  for (auto _ : state) {
    const std::vector<std::byte> wire = serialize(enc.update, cfg.transfer_dtype);
    CompressedUpdate back = deserialize(wire, cfg.transfer_dtype, enc.update);
    benchmark::DoNotOptimize(back.values.data());
  }
}
BENCHMARK(BM_SerializeRoundTrip);

void BM_DecodeAndMerge(benchmark::State& state) {
  const std::size_t replicas = static_cast<std::size_t>(state.range(0));
  const ReplicatorConfig cfg = scheme_config(Scheme::DeMo);
  std::vector<CompressedUpdate> updates;
  for (std::size_t r = 0; r < replicas; ++r) {
    updates.push_back(select_and_encode(random_vector(10 + r, 16384), cfg, 0, 0).update);
  }
  for (auto _ : state) {
    DenseVector q = decode_and_merge(updates, cfg);
    benchmark::DoNotOptimize(q.data());
  }
}
BENCHMARK(BM_DecodeAndMerge)->Arg(2)->Arg(8);

void BM_ClusterStep(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  ClusterTopology topo;
  topo.nodes = 2;
  topo.accels_per_node = 4;
  OptimizerConfig opt;
  opt.kind = OptimizerKind::DemoSgd;
  opt.learning_rate = 0.01;
  const ReplicatorConfig rep = scheme_config(Scheme::DeMo);
  const DenseVector init(dim, 0.0);
  VirtualCluster cluster(topo, dim, true, opt, rep, init);
  const DenseVector target = random_vector(6, dim);
  const VirtualCluster::GradFn grad = [&](std::size_t, std::size_t,
                                          const DenseVector& params) {
    DenseVector g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i] = params[i] - target[i];
    return g;
  };
  uint64_t step = 0;
  for (auto _ : state) {
    cluster.run_step(step++, 0.01, grad);
    benchmark::DoNotOptimize(cluster.worker_params(0, 0).data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(dim));
}
BENCHMARK(BM_ClusterStep)->Arg(4096)->Arg(65536);

}  // namespace

BENCHMARK_MAIN();
