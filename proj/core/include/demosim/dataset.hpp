#pragma once

#include <cstdint>
#include <vector>

#include "demosim/model.hpp"

namespace demosim {

enum class DatasetKind { QuadraticTarget, GaussianBlobs, LinearRegression };

// Synthetic, fully seeded dataset with a fixed 80/20 train/validation split.
// QuadraticTarget: points scattered around a hidden optimum; pairs with the
// Quadratic model. GaussianBlobs: labeled class clusters for cross entropy.
// LinearRegression: targets from a hidden affine map plus optional noise;
// gen_params holds that map for oracle checks.
struct Dataset {
  DatasetKind kind = DatasetKind::GaussianBlobs;
  Batch train;
  Batch val;
  std::vector<double> gen_params;  // LinearRegression generating W, b (Mlp layout)
};

struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianBlobs;
  std::size_t size = 1000;
  std::size_t input_dim = 8;
  std::size_t output_dim = 4;  // classes for blobs, target dim for regression
  double noise = 0.0;          // LinearRegression target noise stddev
};

Dataset make_dataset(const DatasetSpec& spec, uint64_t seed);

// Rows of pool selected by index, in order.
Batch take_batch(const Batch& pool, std::span<const std::size_t> indices);

// Deterministic assignment of training examples to (step, rank) mini batches:
// one seeded permutation, consumed in rank major windows so the union over
// ranks at a step is independent of how the world splits into nodes. Ranks
// within one step never share an example while world * batch <= train size.
class BatchStream {
 public:
  BatchStream(std::size_t train_size, std::size_t world, std::size_t batch, uint64_t seed);

  std::vector<std::size_t> indices_for(uint64_t step, std::size_t rank) const;
  Batch batch_for(const Batch& pool, uint64_t step, std::size_t rank) const;

 private:
  std::vector<std::size_t> order_;
  std::size_t world_;
  std::size_t batch_;
};

}  // namespace demosim
