#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demosim/vec.hpp"

namespace demosim {

enum class ModelKind { Quadratic, Mlp };
enum class Activation { Tanh, Relu };
enum class LossKind { Mse, CrossEntropy };

// A mini-batch of examples. Regression batches carry targets, classification
// batches carry integer labels; exactly one of the two is populated.
struct Batch {
  std::size_t size = 0;
  std::size_t input_dim = 0;
  std::size_t target_dim = 0;
  std::vector<double> inputs;   // row major, size x input_dim
  std::vector<double> targets;  // row major, size x target_dim
  std::vector<int> labels;      // size entries for cross entropy
};

// Differentiable toy models over a flat parameter vector.
//
// Quadratic: loss(theta; batch) = mean_i 1/2 * |theta - x_i|^2, whose gradient
// is exactly theta - mean(x). layer_dims holds the single dimension.
//
// Mlp: fully connected layers layer_dims[0] -> ... -> layer_dims.back() with
// the chosen activation on hidden layers and a linear output, trained with
// mean squared error or softmax cross entropy. Parameters are laid out as
// W0, b0, W1, b1, ... with W row major (out x in).
struct Model {
  ModelKind kind = ModelKind::Quadratic;
  std::vector<std::size_t> layer_dims = {2};
  Activation activation = Activation::Tanh;
  LossKind loss = LossKind::Mse;

  std::size_t param_count() const;
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
};

// params may be longer than param_count(); trailing padding is ignored by the
// forward pass and receives exact zeros in the gradient.
double forward_loss(const Model& model, std::span<const double> params, const Batch& batch);

DenseVector gradient(const Model& model, std::span<const double> params, const Batch& batch);

struct LossAndGradient {
  double loss = 0.0;
  DenseVector grad;
};

// One pass computing both; loss agrees bitwise with forward_loss.
LossAndGradient loss_and_gradient(const Model& model, std::span<const double> params,
                                  const Batch& batch);

// Central difference oracle, O(param_count) forward passes per coordinate pair.
// h must be positive.
DenseVector finite_diff_gradient(const Model& model, std::span<const double> params,
                                 const Batch& batch, double h);

// Seeded initial parameters of length padded_len >= param_count(); the pad
// tail is zero. Quadratic models start at the origin; Mlp weights and biases
// are uniform in +-1/sqrt(fan_in).
DenseVector init_params(const Model& model, uint64_t seed, std::size_t padded_len);

}  // namespace demosim
