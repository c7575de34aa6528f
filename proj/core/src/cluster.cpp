#include "demosim/cluster.hpp"

#include <cstdio>
#include <ostream>

#include "demosim/trainer.hpp"

namespace demosim {

double step_time(const StepTraffic& t, const LinkModel& link) {
  const double intra = static_cast<double>(t.intra_bytes) * 8.0 / link.intra_node_bandwidth;
  const double inter = static_cast<double>(t.inter_bytes) * 8.0 / link.inter_node_bandwidth;
  return link.compute_time_per_step + intra + inter;
}

void TrafficLedger::begin_step(uint64_t step) {
  if (open_) throw ProtocolError("ledger step already open");
  steps_.push_back(StepTraffic{});
  steps_.back().step = step;
  open_ = true;
}

void TrafficLedger::add_intra(uint64_t bytes) {
  if (!open_) throw ProtocolError("no open ledger step");
  steps_.back().intra_bytes += bytes;
}

void TrafficLedger::add_inter(uint64_t bytes) {
  if (!open_) throw ProtocolError("no open ledger step");
  steps_.back().inter_bytes += bytes;
}

void TrafficLedger::note_reduce_scatter() {
  if (!open_) throw ProtocolError("no open ledger step");
  steps_.back().reduce_scatter_events += 1;
}

void TrafficLedger::note_synchronize() {
  if (!open_) throw ProtocolError("no open ledger step");
  steps_.back().synchronize_events += 1;
}

double TrafficLedger::end_step(const LinkModel& link) {
  if (!open_) throw ProtocolError("no open ledger step");
  StepTraffic& t = steps_.back();
  t.step_time_s = step_time(t, link);
  total_time_ += t.step_time_s;
  t.sim_time_s = total_time_;
  total_intra_ += t.intra_bytes;
  total_inter_ += t.inter_bytes;
  open_ = false;
  return t.step_time_s;
}

void TrafficLedger::write_csv(std::ostream& os) const {
  os << "step,intra_bytes,inter_bytes,sim_time_s\n";
  for (const StepTraffic& t : steps_) {
    os << t.step << ',' << t.intra_bytes << ',' << t.inter_bytes << ','
       << format_double(t.sim_time_s) << '\n';
  }
}

std::vector<DenseVector> grad_reduce_scatter(std::span<const DenseVector> grads,
                                             TrafficLedger* ledger) {
  if (grads.empty()) throw ProtocolError("reduce-scatter over an empty group");
  const std::size_t members = grads.size();
  const std::size_t len = grads.front().size();
  for (const DenseVector& g : grads) {
    if (g.size() != len) throw ProtocolError("reduce-scatter members disagree on length");
  }
  if (len % members != 0) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "vector length %zu is not divisible into %zu shards", len,
                  members);
    throw ProtocolError(buf);
  }
  const std::size_t shard = len / members;

  DenseVector mean = mean_of(grads);
  std::vector<DenseVector> out(members);
  for (std::size_t a = 0; a < members; ++a) {
    out[a].assign(mean.begin() + static_cast<long>(a * shard),
                  mean.begin() + static_cast<long>((a + 1) * shard));
  }
  if (ledger != nullptr) {
    // Ring pass: every member forwards all but its own shard, fp32 values.
    ledger->add_intra(static_cast<uint64_t>(members) * (members - 1) * shard * 4);
    ledger->note_reduce_scatter();
  }
  return out;
}

namespace {

std::size_t shard_count(const ClusterTopology& topo) {
  return topo.mode == ClusterMode::HybridSharded ? topo.accels_per_node : 1;
}

}  // namespace

VirtualCluster::VirtualCluster(const ClusterTopology& topo, std::size_t param_count,
                               bool pad_params, const OptimizerConfig& opt,
                               const ReplicatorConfig& rep, const DenseVector& initial_params)
    : topo_(topo), param_count_(param_count), opt_(opt), rep_(rep) {
  if (topo_.nodes == 0 || topo_.accels_per_node == 0) {
    throw ConfigError("topology needs at least one node and one accelerator");
  }
  const std::size_t shards = shard_count(topo_);
  padded_len_ = param_count_;
  if (padded_len_ % shards != 0) {
    if (!pad_params) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "param_count %zu is not divisible by accels_per_node %zu and padding is off",
                    param_count_, shards);
      throw ConfigError(buf);
    }
    padded_len_ += shards - padded_len_ % shards;
  }
  if (initial_params.size() != padded_len_) {
    throw ConfigError("initial parameter vector does not match the padded length");
  }

  const std::size_t replicas =
      topo_.mode == ClusterMode::HybridSharded ? topo_.nodes : topo_.world_size();
  params_.assign(replicas, initial_params);

  states_.reserve(topo_.world_size());
  for (std::size_t w = 0; w < topo_.world_size(); ++w) {
    const std::size_t state_len = topo_.mode == ClusterMode::HybridSharded
                                      ? shard(w % topo_.accels_per_node).real_len
                                      : padded_len_;
    states_.push_back(MomentumState::make(opt_.kind, state_len));
  }
}

const DenseVector& VirtualCluster::worker_params(std::size_t node, std::size_t accel) const {
  if (topo_.mode == ClusterMode::HybridSharded) return params_[node];
  return params_[node * topo_.accels_per_node + accel];
}

const MomentumState& VirtualCluster::worker_state(std::size_t node, std::size_t accel) const {
  return states_[node * topo_.accels_per_node + accel];
}

std::size_t VirtualCluster::num_shards() const { return shard_count(topo_); }

ShardSpec VirtualCluster::shard(std::size_t shard_id) const {
  const std::size_t shards = shard_count(topo_);
  const std::size_t extent = padded_len_ / shards;
  ShardSpec spec;
  spec.offset = shard_id * extent;
  spec.extent = extent;
  spec.real_len = spec.offset >= param_count_
                      ? 0
                      : std::min(extent, param_count_ - spec.offset);
  return spec;
}

void VirtualCluster::run_step(uint64_t step, double lr, const GradFn& grad_fn,
                              const TraceSink* trace) {
  ledger_.begin_step(step);
  if (topo_.mode == ClusterMode::HybridSharded) {
    run_step_hybrid(step, lr, grad_fn, trace);
  } else {
    run_step_ddp(step, lr, grad_fn, trace);
  }
  ledger_.end_step(link_);
}

void VirtualCluster::run_step_hybrid(uint64_t step, double lr, const GradFn& grad_fn,
                                     const TraceSink* trace) {
  const std::size_t n = topo_.nodes;
  const std::size_t a = topo_.accels_per_node;

  // Intra-node phase: gradients land sharded across each node's accelerators.
  std::vector<std::vector<DenseVector>> node_shards(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<DenseVector> grads;
    grads.reserve(a);
    for (std::size_t acc = 0; acc < a; ++acc) {
      grads.push_back(grad_fn(j, acc, params_[j]));
      require_finite(grads.back(), "gradient");
      if (grads.back().size() != padded_len_) {
        throw ProtocolError("gradient length does not match the padded parameters");
      }
    }
    node_shards[j] = grad_reduce_scatter(grads, &ledger_);
  }

  // Inter-node phase: one replication group per shard index.
  const std::size_t remote_nodes = n - 1;
  for (std::size_t s = 0; s < a; ++s) {
    const ShardSpec spec = shard(s);
    std::vector<CompressedUpdate> updates;
    std::vector<DenseVector> local_qs(n);
    updates.reserve(n);

    for (std::size_t j = 0; j < n; ++j) {
      DenseVector& g = node_shards[j][s];
      g.resize(spec.real_len);  // the pad tail never leaves the node
      MomentumState& st = states_[j * a + s];
      EncodeResult enc;
      if (opt_.kind == OptimizerKind::DemoSgd) {
        StepTrace tr;
        enc = demo_sgd_prepare(st, g, opt_, rep_, step, static_cast<uint32_t>(s),
                               trace != nullptr ? &tr : nullptr);
        if (trace != nullptr) (*trace)(j, s, tr);
      } else {
        enc = adamw_prepare(g, rep_, step, static_cast<uint32_t>(s));
      }
      ledger_.add_inter(enc.update.bytes * remote_nodes);
      local_qs[j] = std::move(enc.local_q);
      updates.push_back(std::move(enc.update));
    }
    ledger_.note_synchronize();

    const bool synced = !updates.front().empty;
    DenseVector merged;
    if (synced) merged = decode_and_merge(updates, rep_);

    for (std::size_t j = 0; j < n; ++j) {
      std::span<double> shard_params(params_[j].data() + spec.offset, spec.real_len);
      if (opt_.kind == OptimizerKind::DemoSgd) {
        demo_sgd_apply(shard_params, synced ? merged : node_shards[j][s], lr);
      } else {
        adamw_apply(shard_params, states_[j * a + s], node_shards[j][s], local_qs[j],
                    synced ? &merged : nullptr, opt_, lr);
      }
    }
  }
}

void VirtualCluster::run_step_ddp(uint64_t step, double lr, const GradFn& grad_fn,
                                  const TraceSink* trace) {
  const std::size_t n = topo_.nodes;
  const std::size_t a = topo_.accels_per_node;
  const std::size_t world = topo_.world_size();
  const std::size_t remote_nodes = n - 1;
  const std::size_t local_peers = a - 1;

  std::vector<DenseVector> grads(world);
  std::vector<DenseVector> local_qs(world);
  std::vector<CompressedUpdate> updates;
  updates.reserve(world);

  for (std::size_t w = 0; w < world; ++w) {
    const std::size_t node = w / a;
    const std::size_t accel = w % a;
    grads[w] = grad_fn(node, accel, params_[w]);
    require_finite(grads[w], "gradient");
    if (grads[w].size() != padded_len_) {
      throw ProtocolError("gradient length does not match the padded parameters");
    }
    grads[w].resize(param_count_);

    EncodeResult enc;
    if (opt_.kind == OptimizerKind::DemoSgd) {
      StepTrace tr;
      enc = demo_sgd_prepare(states_[w], grads[w], opt_, rep_, step, 0,
                             trace != nullptr ? &tr : nullptr);
      if (trace != nullptr) (*trace)(node, accel, tr);
    } else {
      enc = adamw_prepare(grads[w], rep_, step, 0);
    }
    // Each update crosses every inter-node link once and reaches same-node
    // peers over the local bus.
    ledger_.add_inter(enc.update.bytes * remote_nodes);
    ledger_.add_intra(enc.update.bytes * local_peers);
    local_qs[w] = std::move(enc.local_q);
    updates.push_back(std::move(enc.update));
  }
  ledger_.note_synchronize();

  const bool synced = !updates.front().empty;
  DenseVector merged;
  if (synced) merged = decode_and_merge(updates, rep_);

  for (std::size_t w = 0; w < world; ++w) {
    std::span<double> p(params_[w].data(), param_count_);
    if (opt_.kind == OptimizerKind::DemoSgd) {
      demo_sgd_apply(p, synced ? merged : grads[w], lr);
    } else {
      adamw_apply(p, states_[w], grads[w], local_qs[w], synced ? &merged : nullptr, opt_, lr);
    }
  }
}

}  // namespace demosim
