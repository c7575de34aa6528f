#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "demosim/cluster.hpp"
#include "demosim/config.hpp"

namespace demosim {

struct StepMetrics {
  uint64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;  // present on eval steps
  uint64_t intra_bytes = 0;
  uint64_t inter_bytes = 0;
  double sim_time_s = 0.0;  // cumulative
};

struct RunResult {
  std::vector<StepMetrics> metrics;
  std::vector<StepTraffic> traffic;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  uint64_t total_intra_bytes = 0;
  uint64_t total_inter_bytes = 0;
  double total_sim_time_s = 0.0;
  uint64_t steps_completed = 0;
};

// Runs a full experiment in memory. `out` accumulates incrementally so a
// divergence abort (TrainingError) still leaves every completed step behind.
// The optional trace sink observes each worker's local optimizer phase.
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg);

  void run(RunResult& out, const VirtualCluster::TraceSink* trace = nullptr);

  const VirtualCluster& cluster() const { return *cluster_; }
  const Dataset& dataset() const { return dataset_; }

 private:
  double eval_loss(const DenseVector& params) const;

  ExperimentConfig cfg_;
  Dataset dataset_;
  std::unique_ptr<VirtualCluster> cluster_;
  std::unique_ptr<BatchStream> stream_;
};

// Learning rate at a step under linear warmup over warmup_fraction * steps.
double lr_at(const ExperimentConfig& cfg, uint64_t step);

RunResult run_experiment(const ExperimentConfig& cfg);

// metrics.csv, ledger.csv and summary.json under dir (created if missing).
// Byte identical across reruns of the same config.
void write_run_outputs(const ExperimentConfig& cfg, const RunResult& result,
                       const std::string& dir);

struct SweepPoint {
  std::string value;
  std::string out_dir;
  bool ok = false;
  std::string error;
  RunResult result;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepPoint> points;
};

// Runs base once per axis value; a failing point is recorded and the sweep
// continues. Axes: compression, chunk_size, top_k, sign, transfer_dtype,
// scheme, inter_bandwidth_mbps. Writes each point under
// <out>/<axis>-<value>/ plus a combined sweep.csv keyed by axis value.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, const std::string& out_dir);

void write_sweep_csv(const SweepResult& sweep, const std::string& out_dir);

// Formats a double so reading it back reproduces the same bits.
std::string format_double(double x);

}  // namespace demosim
