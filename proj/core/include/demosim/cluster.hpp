#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "demosim/optim.hpp"
#include "demosim/replicate.hpp"
#include "demosim/vec.hpp"

namespace demosim {

enum class ClusterMode { HybridSharded, DdpAllGather };

struct ClusterTopology {
  std::size_t nodes = 1;
  std::size_t accels_per_node = 1;
  ClusterMode mode = ClusterMode::HybridSharded;

  std::size_t world_size() const { return nodes * accels_per_node; }
};

struct LinkModel {
  double intra_node_bandwidth = 100e9;  // bits per second
  double inter_node_bandwidth = 10e9;   // bits per second
  double compute_time_per_step = 0.01;  // seconds
};

struct StepTraffic {
  uint64_t step = 0;
  uint64_t intra_bytes = 0;
  uint64_t inter_bytes = 0;
  uint32_t reduce_scatter_events = 0;
  uint32_t synchronize_events = 0;
  double step_time_s = 0.0;
  double sim_time_s = 0.0;  // cumulative through this step
};

double step_time(const StepTraffic& t, const LinkModel& link);

// Byte-exact record of simulated traffic, split by link class.
class TrafficLedger {
 public:
  void begin_step(uint64_t step);
  void add_intra(uint64_t bytes);
  void add_inter(uint64_t bytes);
  void note_reduce_scatter();
  void note_synchronize();
  double end_step(const LinkModel& link);  // returns this step's time

  const std::vector<StepTraffic>& steps() const { return steps_; }
  uint64_t total_intra_bytes() const { return total_intra_; }
  uint64_t total_inter_bytes() const { return total_inter_; }
  double total_time_s() const { return total_time_; }

  // CSV columns: step, intra_bytes, inter_bytes, sim_time_s.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<StepTraffic> steps_;
  uint64_t total_intra_ = 0;
  uint64_t total_inter_ = 0;
  double total_time_ = 0.0;
  bool open_ = false;
};

struct ShardSpec {
  std::size_t offset = 0;    // start within the padded parameter vector
  std::size_t extent = 0;    // padded shard length
  std::size_t real_len = 0;  // length excluding the model pad tail
};

// Elementwise mean of the member gradients, returned as one shard per member
// (ranges of the padded vector). Charges (members - 1) * shard * 4 bytes of
// intra-node traffic per member: each value is fp32 on the local bus.
std::vector<DenseVector> grad_reduce_scatter(std::span<const DenseVector> grads,
                                             TrafficLedger* ledger);

// A virtual training cluster over a flat parameter vector.
//
// HybridSharded: accelerators within a node hold one parameter replica
// jointly. Gradients reduce-scatter across the node (intra link); each shard
// index forms a replication group of one member per node whose compressed
// updates synchronize over the inter link.
//
// DdpAllGather: every accelerator holds the full model and joins one global
// replication group; same-node peers exchange over the intra link and each
// remote node is charged once per member on the inter link.
class VirtualCluster {
 public:
  // node, accel, and that worker's current full parameter vector -> gradient
  // of the same (padded) length.
  using GradFn = std::function<DenseVector(std::size_t node, std::size_t accel,
                                           const DenseVector& params)>;

  // Per worker and shard audit hook, called once per local phase.
  using TraceSink =
      std::function<void(std::size_t node, std::size_t accel, const StepTrace& trace)>;

  VirtualCluster(const ClusterTopology& topo, std::size_t param_count, bool pad_params,
                 const OptimizerConfig& opt, const ReplicatorConfig& rep,
                 const DenseVector& initial_params);

  void run_step(uint64_t step, double lr, const GradFn& grad_fn,
                const TraceSink* trace = nullptr);

  const ClusterTopology& topology() const { return topo_; }
  std::size_t padded_len() const { return padded_len_; }
  std::size_t param_count() const { return param_count_; }

  // The replica a given worker trains against.
  const DenseVector& worker_params(std::size_t node, std::size_t accel) const;
  const MomentumState& worker_state(std::size_t node, std::size_t accel) const;

  ShardSpec shard(std::size_t shard_id) const;
  std::size_t num_shards() const;

  TrafficLedger& ledger() { return ledger_; }
  const TrafficLedger& ledger() const { return ledger_; }
  const LinkModel& link() const { return link_; }
  void set_link(const LinkModel& link) { link_ = link; }

 private:
  void run_step_hybrid(uint64_t step, double lr, const GradFn& grad_fn, const TraceSink* trace);
  void run_step_ddp(uint64_t step, double lr, const GradFn& grad_fn, const TraceSink* trace);

  ClusterTopology topo_;
  std::size_t param_count_ = 0;
  std::size_t padded_len_ = 0;
  OptimizerConfig opt_;
  ReplicatorConfig rep_;
  LinkModel link_;
  std::vector<DenseVector> params_;       // per node (hybrid) or per worker (ddp)
  std::vector<MomentumState> states_;     // per worker
  TrafficLedger ledger_;
};

}  // namespace demosim
