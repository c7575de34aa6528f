#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "demosim/cluster.hpp"
#include "demosim/dataset.hpp"
#include "demosim/model.hpp"
#include "demosim/optim.hpp"
#include "demosim/replicate.hpp"

namespace demosim {

// Everything a run needs, trivially copyable between sweep points. Field
// names mirror the config file keys; see parse_config for the key list.
struct ExperimentConfig {
  ClusterTopology topology;
  Model model;
  bool pad_params = true;
  DatasetSpec dataset;
  OptimizerConfig optimizer;
  ReplicatorConfig replicator;
  LinkModel link;

  uint64_t steps = 200;
  std::size_t batch_size = 8;
  uint64_t eval_every = 50;
  double warmup_fraction = 0.0;
  uint64_t seed = 1234;
  std::string out_dir = "demosim-out";

  bool replicator_seed_set = false;  // default replicator.seed follows seed
};

// Parses `key = value` lines (dotted keys, # comments, blank lines ignored)
// and validates the result. Reports every violation at once via ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// Re-checks cross-field constraints after programmatic edits (sweeps, CLI
// overrides). Fills derived values: DeMo top_k/compression coupling, padded
// lengths, the replicator seed default.
void validate_config(ExperimentConfig& cfg);

// Padded parameter length for the configured topology and padding policy.
std::size_t padded_param_len(const ExperimentConfig& cfg);

// Fraction of components exchanged per synchronize call for this config.
double effective_compression(const ExperimentConfig& cfg);

std::string mode_name(ClusterMode m);
std::string optimizer_name(OptimizerKind k);
std::string dataset_name(DatasetKind k);
std::string model_kind_name(ModelKind k);

}  // namespace demosim
