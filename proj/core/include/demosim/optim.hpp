#pragma once

#include <cstdint>
#include <span>

#include "demosim/replicate.hpp"
#include "demosim/vec.hpp"

namespace demosim {

enum class OptimizerKind { DemoSgd, DecoupledAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::DemoSgd;
  double learning_rate = 0.05;
  double momentum_decay = 0.9;  // beta for DemoSgd
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied directly to params
};

// Per worker, per shard optimizer state.
struct MomentumState {
  DenseVector m;           // decoupled momentum (DemoSgd)
  DenseVector exp_avg;     // AdamW first moment
  DenseVector exp_avg_sq;  // AdamW second moment
  uint64_t steps = 0;      // AdamW bias correction counter

  static MomentumState make(OptimizerKind kind, std::size_t len);
};

// Captured when a caller wants to audit one local step.
struct StepTrace {
  DenseVector m_accum;  // momentum right after accumulation
  DenseVector local_q;  // what the replicator took out
  DenseVector m_after;  // momentum handed to the next step
};

// DemoSgd local phase: m <- beta * m + grad, pick the fast components to
// share, then m <- m - local_q. Requires a finite gradient.
EncodeResult demo_sgd_prepare(MomentumState& state, std::span<const double> grad,
                              const OptimizerConfig& opt, const ReplicatorConfig& rep,
                              uint64_t step, uint32_t shard_id, StepTrace* trace = nullptr);

// DemoSgd apply phase: params <- params - lr * q, where q is the merged group
// update, or the local gradient on a DiLoCo step with no exchange.
void demo_sgd_apply(std::span<double> params, std::span<const double> q, double lr);

// Decoupled AdamW local phase: the replicator selects directly from the raw
// gradient; moments stay untouched until apply.
EncodeResult adamw_prepare(std::span<const double> grad, const ReplicatorConfig& rep,
                           uint64_t step, uint32_t shard_id);

// Decoupled AdamW apply phase. The effective gradient swaps the shared slice
// for its group merge, g' = grad - local_q + merged, or falls back to the raw
// local gradient when merged is null (DiLoCo between sync points). Moments
// and weight decay stay strictly local.
void adamw_apply(std::span<double> params, MomentumState& state, std::span<const double> grad,
                 std::span<const double> local_q, const DenseVector* merged,
                 const OptimizerConfig& opt, double lr);

// Single loop references: one worker, everything synchronized every step.
// These are the baseline arms and the oracles the distributed path collapses
// to when the group has a single member.
void baseline_sgd_step(std::span<double> params, MomentumState& state,
                       std::span<const double> grad, const OptimizerConfig& opt, double lr);
void baseline_adamw_step(std::span<double> params, MomentumState& state,
                         std::span<const double> grad, const OptimizerConfig& opt, double lr);

}  // namespace demosim
