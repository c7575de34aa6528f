#include "demosim/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "demosim/rng.hpp"

namespace demosim {

namespace {

Batch slice(const Batch& pool, std::size_t begin, std::size_t end) {
  Batch out;
  out.size = end - begin;
  out.input_dim = pool.input_dim;
  out.target_dim = pool.target_dim;
  out.inputs.assign(pool.inputs.begin() + static_cast<long>(begin * pool.input_dim),
                    pool.inputs.begin() + static_cast<long>(end * pool.input_dim));
  if (!pool.targets.empty()) {
    out.targets.assign(pool.targets.begin() + static_cast<long>(begin * pool.target_dim),
                       pool.targets.begin() + static_cast<long>(end * pool.target_dim));
  }
  if (!pool.labels.empty()) {
    out.labels.assign(pool.labels.begin() + static_cast<long>(begin),
                      pool.labels.begin() + static_cast<long>(end));
  }
  return out;
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec, uint64_t seed) {
  if (spec.size < 10) throw ConfigError("dataset size must be at least 10");
  if (spec.input_dim == 0 || spec.output_dim == 0) {
    throw ConfigError("dataset dimensions must be positive");
  }
  Dataset ds;
  ds.kind = spec.kind;
  Batch pool;
  pool.size = spec.size;
  pool.input_dim = spec.input_dim;
  Rng rng(mix_seed(seed, 0x64617461ULL));

  switch (spec.kind) {
    case DatasetKind::QuadraticTarget: {
      // Points scattered around a hidden optimum; the model chases their mean.
      std::vector<double> center(spec.input_dim);
      for (double& c : center) c = rng.uniform(-2.0, 2.0);
      pool.inputs.resize(spec.size * spec.input_dim);
      for (std::size_t i = 0; i < spec.size; ++i) {
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          pool.inputs[i * spec.input_dim + d] = center[d] + 0.5 * rng.normal();
        }
      }
      break;
    }
    case DatasetKind::GaussianBlobs: {
      const std::size_t classes = spec.output_dim;
      std::vector<double> means(classes * spec.input_dim);
      for (double& m : means) m = rng.uniform(-3.0, 3.0);
      pool.inputs.resize(spec.size * spec.input_dim);
      pool.labels.resize(spec.size);
      for (std::size_t i = 0; i < spec.size; ++i) {
        const std::size_t c = i % classes;
        pool.labels[i] = static_cast<int>(c);
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          pool.inputs[i * spec.input_dim + d] = means[c * spec.input_dim + d] + rng.normal();
        }
      }
      break;
    }
    case DatasetKind::LinearRegression: {
      const std::size_t out_dim = spec.output_dim;
      // Generating map stored in the Mlp parameter layout: W row major, then b.
      ds.gen_params.resize(out_dim * spec.input_dim + out_dim);
      for (double& w : ds.gen_params) w = rng.uniform(-1.0, 1.0);
      const double* W = ds.gen_params.data();
      const double* b = ds.gen_params.data() + out_dim * spec.input_dim;
      pool.inputs.resize(spec.size * spec.input_dim);
      pool.target_dim = out_dim;
      pool.targets.resize(spec.size * out_dim);
      for (std::size_t i = 0; i < spec.size; ++i) {
        double* x = pool.inputs.data() + i * spec.input_dim;
        for (std::size_t d = 0; d < spec.input_dim; ++d) x[d] = rng.normal();
        for (std::size_t r = 0; r < out_dim; ++r) {
          double y = b[r];
          for (std::size_t d = 0; d < spec.input_dim; ++d) y += W[r * spec.input_dim + d] * x[d];
          if (spec.noise > 0.0) y += spec.noise * rng.normal();
          pool.targets[i * out_dim + r] = y;
        }
      }
      break;
    }
  }

  const std::size_t train_n = spec.size * 8 / 10;
  ds.train = slice(pool, 0, train_n);
  ds.val = slice(pool, train_n, spec.size);
  return ds;
}

Batch take_batch(const Batch& pool, std::span<const std::size_t> indices) {
  Batch out;
  out.size = indices.size();
  out.input_dim = pool.input_dim;
  out.target_dim = pool.target_dim;
  out.inputs.reserve(indices.size() * pool.input_dim);
  if (!pool.targets.empty()) out.targets.reserve(indices.size() * pool.target_dim);
  if (!pool.labels.empty()) out.labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= pool.size) throw ConfigError("batch index out of range");
    const auto in_begin = pool.inputs.begin() + static_cast<long>(idx * pool.input_dim);
    out.inputs.insert(out.inputs.end(), in_begin, in_begin + static_cast<long>(pool.input_dim));
    if (!pool.targets.empty()) {
      const auto t_begin = pool.targets.begin() + static_cast<long>(idx * pool.target_dim);
      out.targets.insert(out.targets.end(), t_begin,
                         t_begin + static_cast<long>(pool.target_dim));
    }
    if (!pool.labels.empty()) out.labels.push_back(pool.labels[idx]);
  }
  return out;
}

BatchStream::BatchStream(std::size_t train_size, std::size_t world, std::size_t batch,
                         uint64_t seed)
    : world_(world), batch_(batch) {
  if (train_size == 0 || world == 0 || batch == 0) {
    throw ConfigError("batch stream needs a nonempty pool, world and batch size");
  }
  if (world * batch > train_size) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "global batch %zu x %zu exceeds the training pool of %zu examples", world,
                  batch, train_size);
    throw ConfigError(buf);
  }
  order_.resize(train_size);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x626174636865ULL));
  rng.shuffle(order_);
}

std::vector<std::size_t> BatchStream::indices_for(uint64_t step, std::size_t rank) const {
  std::vector<std::size_t> out(batch_);
  const std::size_t n = order_.size();
  // Rank major: the union over ranks at a step does not depend on how the
  // world is split between nodes and accelerators.
  const uint64_t base = (step * world_ + rank) * batch_;
  for (std::size_t j = 0; j < batch_; ++j) {
    out[j] = order_[static_cast<std::size_t>((base + j) % n)];
  }
  return out;
}

Batch BatchStream::batch_for(const Batch& pool, uint64_t step, std::size_t rank) const {
  const std::vector<std::size_t> idx = indices_for(step, rank);
  return take_batch(pool, idx);
}

}  // namespace demosim
