#include "demosim/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "demosim/rng.hpp"

namespace demosim {

namespace {

void check_batch(const Model& model, std::span<const double> params, const Batch& batch) {
  char buf[160];
  if (params.size() < model.param_count()) {
    std::snprintf(buf, sizeof buf, "parameter vector too short: %zu < %zu", params.size(),
                  model.param_count());
    throw ConfigError(buf);
  }
  if (batch.size == 0) throw ConfigError("empty batch");
  if (batch.input_dim != model.input_dim()) {
    std::snprintf(buf, sizeof buf, "batch input dim %zu does not match model input dim %zu",
                  batch.input_dim, model.input_dim());
    throw ConfigError(buf);
  }
  if (model.kind == ModelKind::Mlp) {
    if (model.loss == LossKind::CrossEntropy) {
      if (batch.labels.size() != batch.size) {
        throw ConfigError("cross entropy batch is missing labels");
      }
    } else if (batch.targets.size() != batch.size * model.output_dim()) {
      throw ConfigError("regression batch targets do not match model output dim");
    }
  }
}

double activate(Activation act, double z) {
  return act == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

double activate_grad(Activation act, double z, double a) {
  if (act == Activation::Tanh) return 1.0 - a * a;
  (void)z;
  return a > 0.0 ? 1.0 : 0.0;
}

// Column counts of the per layer activation buffers for one example.
struct MlpWork {
  std::vector<std::vector<double>> acts;  // acts[l] has layer_dims[l] entries
  std::vector<double> probs;              // softmax scratch
};

void mlp_forward_example(const Model& model, std::span<const double> params,
                         const double* x, MlpWork& w) {
  const auto& dims = model.layer_dims;
  w.acts.resize(dims.size());
  w.acts[0].assign(x, x + dims[0]);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double* W = params.data() + off;
    const double* b = params.data() + off + out * in;
    w.acts[l + 1].resize(out);
    const bool hidden = l + 2 < dims.size();
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* row = W + r * in;
      for (std::size_t c = 0; c < in; ++c) z += row[c] * w.acts[l][c];
      w.acts[l + 1][r] = hidden ? activate(model.activation, z) : z;
    }
    off += out * in + out;
  }
}

double example_loss(const Model& model, const Batch& batch, std::size_t i, MlpWork& w) {
  const std::size_t out_dim = model.output_dim();
  const std::vector<double>& o = w.acts.back();
  if (model.loss == LossKind::CrossEntropy) {
    double m = *std::max_element(o.begin(), o.end());
    double denom = 0.0;
    w.probs.resize(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      w.probs[r] = std::exp(o[r] - m);
      denom += w.probs[r];
    }
    for (std::size_t r = 0; r < out_dim; ++r) w.probs[r] /= denom;
    return -std::log(w.probs[static_cast<std::size_t>(batch.labels[i])]);
  }
  const double* t = batch.targets.data() + i * out_dim;
  double acc = 0.0;
  for (std::size_t r = 0; r < out_dim; ++r) {
    const double d = o[r] - t[r];
    acc += d * d;
  }
  return 0.5 * acc;
}

double quadratic_loss(std::span<const double> params, const Batch& batch, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    const double* x = batch.inputs.data() + i * dim;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = params[d] - x[d];
      sq += diff * diff;
    }
    acc += 0.5 * sq;
  }
  return acc / static_cast<double>(batch.size);
}

}  // namespace

std::size_t Model::param_count() const {
  if (kind == ModelKind::Quadratic) return layer_dims.front();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    total += layer_dims[l + 1] * layer_dims[l] + layer_dims[l + 1];
  }
  return total;
}

double forward_loss(const Model& model, std::span<const double> params, const Batch& batch) {
  check_batch(model, params, batch);
  if (model.kind == ModelKind::Quadratic) {
    return quadratic_loss(params, batch, model.layer_dims.front());
  }
  MlpWork w;
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    mlp_forward_example(model, params, batch.inputs.data() + i * batch.input_dim, w);
    acc += example_loss(model, batch, i, w);
  }
  return acc / static_cast<double>(batch.size);
}

LossAndGradient loss_and_gradient(const Model& model, std::span<const double> params,
                                  const Batch& batch) {
  check_batch(model, params, batch);
  LossAndGradient result;
  result.grad.assign(params.size(), 0.0);

  if (model.kind == ModelKind::Quadratic) {
    const std::size_t dim = model.layer_dims.front();
    result.loss = quadratic_loss(params, batch, dim);
    // Gradient is theta - mean(x), computed exactly in that form.
    for (std::size_t d = 0; d < dim; ++d) {
      double sum = 0.0;
      for (std::size_t i = 0; i < batch.size; ++i) sum += batch.inputs[i * dim + d];
      result.grad[d] = params[d] - sum / static_cast<double>(batch.size);
    }
    return result;
  }

  const auto& dims = model.layer_dims;
  const double inv_b = 1.0 / static_cast<double>(batch.size);
  MlpWork w;
  std::vector<double> delta, delta_prev;
  double acc = 0.0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    mlp_forward_example(model, params, batch.inputs.data() + i * batch.input_dim, w);
    acc += example_loss(model, batch, i, w);

    const std::size_t out_dim = dims.back();
    delta.resize(out_dim);
    if (model.loss == LossKind::CrossEntropy) {
      for (std::size_t r = 0; r < out_dim; ++r) {
        delta[r] = (w.probs[r] - (static_cast<std::size_t>(batch.labels[i]) == r ? 1.0 : 0.0)) *
                   inv_b;
      }
    } else {
      const double* t = batch.targets.data() + i * out_dim;
      for (std::size_t r = 0; r < out_dim; ++r) delta[r] = (w.acts.back()[r] - t[r]) * inv_b;
    }

    // Walk layers backwards, accumulating into the flat gradient.
    std::size_t off = model.param_count();
    for (std::size_t l = dims.size() - 1; l-- > 0;) {
      const std::size_t in = dims[l];
      const std::size_t out = dims[l + 1];
      off -= out * in + out;
      double* gW = result.grad.data() + off;
      double* gb = result.grad.data() + off + out * in;
      for (std::size_t r = 0; r < out; ++r) {
        gb[r] += delta[r];
        double* grow = gW + r * in;
        for (std::size_t c = 0; c < in; ++c) grow[c] += delta[r] * w.acts[l][c];
      }
      if (l == 0) break;
      delta_prev.assign(in, 0.0);
      const double* W = params.data() + off;
      for (std::size_t c = 0; c < in; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < out; ++r) s += W[r * in + c] * delta[r];
        delta_prev[c] = s * activate_grad(model.activation, 0.0, w.acts[l][c]);
      }
      delta.swap(delta_prev);
    }
  }
  result.loss = acc / static_cast<double>(batch.size);
  return result;
}

DenseVector gradient(const Model& model, std::span<const double> params, const Batch& batch) {
  return loss_and_gradient(model, params, batch).grad;
}

DenseVector finite_diff_gradient(const Model& model, std::span<const double> params,
                                 const Batch& batch, double h) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  DenseVector theta(params.begin(), params.end());
  DenseVector out(params.size(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    const double up = forward_loss(model, theta, batch);
    theta[i] = saved - h;
    const double down = forward_loss(model, theta, batch);
    theta[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

DenseVector init_params(const Model& model, uint64_t seed, std::size_t padded_len) {
  const std::size_t n = model.param_count();
  if (padded_len < n) throw ConfigError("padded parameter length shorter than the model");
  DenseVector params(padded_len, 0.0);
  if (model.kind == ModelKind::Quadratic) return params;

  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    const std::size_t in = model.layer_dims[l];
    const std::size_t out = model.layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t k = 0; k < out * in + out; ++k) {
      params[off + k] = rng.uniform(-bound, bound);
    }
    off += out * in + out;
  }
  return params;
}

}  // namespace demosim
