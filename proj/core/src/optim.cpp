#include "demosim/optim.hpp"

#include <cmath>

namespace demosim {

MomentumState MomentumState::make(OptimizerKind kind, std::size_t len) {
  MomentumState st;
  if (kind == OptimizerKind::DemoSgd) {
    st.m.assign(len, 0.0);
  } else {
    st.exp_avg.assign(len, 0.0);
    st.exp_avg_sq.assign(len, 0.0);
  }
  return st;
}

EncodeResult demo_sgd_prepare(MomentumState& state, std::span<const double> grad,
                              const OptimizerConfig& opt, const ReplicatorConfig& rep,
                              uint64_t step, uint32_t shard_id, StepTrace* trace) {
  require_finite(grad, "gradient");
  if (grad.size() != state.m.size()) {
    throw ProtocolError("gradient and momentum lengths disagree");
  }
  const double beta = opt.momentum_decay;
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    state.m[i] = beta * state.m[i] + grad[i];
  }
  if (trace != nullptr) trace->m_accum = state.m;

  EncodeResult res = select_and_encode(state.m, rep, step, shard_id);

  // The shared slice leaves the momentum; the slow remainder stays behind.
  // With a full-band or full-vector selection this flushes m to zero exactly.
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    state.m[i] -= res.local_q[i];
  }
  if (trace != nullptr) {
    trace->local_q = res.local_q;
    trace->m_after = state.m;
  }
  return res;
}

void demo_sgd_apply(std::span<double> params, std::span<const double> q, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * q[i];
  }
}

EncodeResult adamw_prepare(std::span<const double> grad, const ReplicatorConfig& rep,
                           uint64_t step, uint32_t shard_id) {
  require_finite(grad, "gradient");
  return select_and_encode(grad, rep, step, shard_id);
}

void adamw_apply(std::span<double> params, MomentumState& state, std::span<const double> grad,
                 std::span<const double> local_q, const DenseVector* merged,
                 const OptimizerConfig& opt, double lr) {
  const std::size_t n = params.size();
  state.steps += 1;
  const double bc1 = 1.0 - std::pow(opt.adam_beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(opt.adam_beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < n; ++i) {
    // Swap the transmitted slice of the gradient for its group consensus.
    const double g = merged != nullptr ? grad[i] - local_q[i] + (*merged)[i] : grad[i];
    state.exp_avg[i] = opt.adam_beta1 * state.exp_avg[i] + (1.0 - opt.adam_beta1) * g;
    state.exp_avg_sq[i] = opt.adam_beta2 * state.exp_avg_sq[i] + (1.0 - opt.adam_beta2) * g * g;
    const double m_hat = state.exp_avg[i] / bc1;
    const double v_hat = state.exp_avg_sq[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + opt.adam_eps));
    if (opt.weight_decay != 0.0) params[i] -= lr * opt.weight_decay * params[i];
  }
}

void baseline_sgd_step(std::span<double> params, MomentumState& state,
                       std::span<const double> grad, const OptimizerConfig& opt, double lr) {
  require_finite(grad, "gradient");
  const double beta = opt.momentum_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    // Accumulate, apply, flush: the fully synchronized analogue of the
    // decoupled update, where every component is fast.
    const double v = beta * state.m[i] + grad[i];
    params[i] -= lr * v;
    state.m[i] = 0.0;
  }
}

void baseline_adamw_step(std::span<double> params, MomentumState& state,
                         std::span<const double> grad, const OptimizerConfig& opt, double lr) {
  require_finite(grad, "gradient");
  adamw_apply(params, state, grad, grad, nullptr, opt, lr);
}

}  // namespace demosim
