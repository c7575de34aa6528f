#include "demosim/trainer.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "demosim/rng.hpp"

namespace demosim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double lr_at(const ExperimentConfig& cfg, uint64_t step) {
  const double base = cfg.optimizer.learning_rate;
  const auto warm = static_cast<uint64_t>(
      std::llround(cfg.warmup_fraction * static_cast<double>(cfg.steps)));
  if (warm == 0 || step >= warm) return base;
  return base * static_cast<double>(step + 1) / static_cast<double>(warm);
}

Trainer::Trainer(const ExperimentConfig& cfg) : cfg_(cfg) {
  validate_config(cfg_);
  dataset_ = make_dataset(cfg_.dataset, cfg_.seed);
  const std::size_t padded = padded_param_len(cfg_);
  DenseVector init = init_params(cfg_.model, cfg_.seed, padded);
  cluster_ = std::make_unique<VirtualCluster>(cfg_.topology, cfg_.model.param_count(),
                                              cfg_.pad_params, cfg_.optimizer, cfg_.replicator,
                                              init);
  cluster_->set_link(cfg_.link);
  stream_ = std::make_unique<BatchStream>(dataset_.train.size, cfg_.topology.world_size(),
                                          cfg_.batch_size, cfg_.seed);
}

double Trainer::eval_loss(const DenseVector& params) const {
  return forward_loss(cfg_.model, params, dataset_.val);
}

void Trainer::run(RunResult& out, const VirtualCluster::TraceSink* trace) {
  const std::size_t a = cfg_.topology.accels_per_node;
  for (uint64_t step = 0; step < cfg_.steps; ++step) {
    double loss_sum = 0.0;
    auto grad_fn = [&](std::size_t node, std::size_t accel,
                       const DenseVector& params) -> DenseVector {
      const Batch b = stream_->batch_for(dataset_.train, step, node * a + accel);
      LossAndGradient lg = loss_and_gradient(cfg_.model, params, b);
      loss_sum += lg.loss;
      return std::move(lg.grad);
    };
    cluster_->run_step(step, lr_at(cfg_, step), grad_fn, trace);

    const double world = static_cast<double>(cfg_.topology.world_size());
    StepMetrics m;
    m.step = step;
    m.train_loss = loss_sum / world;
    if (!std::isfinite(m.train_loss)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "training diverged at step %llu (loss %g)",
                    static_cast<unsigned long long>(step), m.train_loss);
      throw TrainingError(buf);
    }
    const StepTraffic& t = cluster_->ledger().steps().back();
    m.intra_bytes = t.intra_bytes;
    m.inter_bytes = t.inter_bytes;
    m.sim_time_s = t.sim_time_s;
    if ((step + 1) % cfg_.eval_every == 0 || step + 1 == cfg_.steps) {
      m.val_loss = eval_loss(cluster_->worker_params(0, 0));
    }
    out.metrics.push_back(std::move(m));
    out.traffic.push_back(t);
    out.steps_completed = step + 1;
    out.final_train_loss = out.metrics.back().train_loss;
    if (out.metrics.back().val_loss.has_value()) {
      out.final_val_loss = *out.metrics.back().val_loss;
    }
    out.total_intra_bytes = cluster_->ledger().total_intra_bytes();
    out.total_inter_bytes = cluster_->ledger().total_inter_bytes();
    out.total_sim_time_s = cluster_->ledger().total_time_s();
  }
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  Trainer trainer(cfg);
  RunResult out;
  trainer.run(out);
  return out;
}

namespace {

void write_metrics_csv(const fs::path& path, const RunResult& r) {
  std::ofstream os(path, std::ios::binary);
  os << "step,train_loss,val_loss,intra_bytes,inter_bytes,sim_time_s\n";
  for (const StepMetrics& m : r.metrics) {
    os << m.step << ',' << format_double(m.train_loss) << ',';
    if (m.val_loss.has_value()) os << format_double(*m.val_loss);
    os << ',' << m.intra_bytes << ',' << m.inter_bytes << ',' << format_double(m.sim_time_s)
       << '\n';
  }
}

void write_ledger_csv(const fs::path& path, const RunResult& r) {
  std::ofstream os(path, std::ios::binary);
  os << "step,intra_bytes,inter_bytes,sim_time_s\n";
  for (const StepTraffic& t : r.traffic) {
    os << t.step << ',' << t.intra_bytes << ',' << t.inter_bytes << ','
       << format_double(t.sim_time_s) << '\n';
  }
}

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["topology"] = {{"nodes", cfg.topology.nodes},
                   {"accels_per_node", cfg.topology.accels_per_node},
                   {"mode", mode_name(cfg.topology.mode)}};
  j["model"] = {{"kind", model_kind_name(cfg.model.kind)},
                {"layer_dims", cfg.model.layer_dims},
                {"param_count", cfg.model.param_count()}};
  j["dataset"] = {{"kind", dataset_name(cfg.dataset.kind)}, {"size", cfg.dataset.size}};
  j["optimizer"] = {{"kind", optimizer_name(cfg.optimizer.kind)},
                    {"learning_rate", cfg.optimizer.learning_rate},
                    {"momentum_decay", cfg.optimizer.momentum_decay}};
  j["replicator"] = {{"scheme", scheme_name(cfg.replicator.scheme)},
                     {"chunk_size", cfg.replicator.chunk_size},
                     {"top_k", cfg.replicator.top_k},
                     {"compression", effective_compression(cfg)},
                     {"sign", cfg.replicator.sign_mode},
                     {"transfer_dtype", dtype_name(cfg.replicator.transfer_dtype)},
                     {"seed", cfg.replicator.seed}};
  j["link"] = {{"intra_node_bandwidth", cfg.link.intra_node_bandwidth},
               {"inter_node_bandwidth", cfg.link.inter_node_bandwidth},
               {"compute_time_per_step", cfg.link.compute_time_per_step}};
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  return j;
}

void write_summary_json(const fs::path& path, const ExperimentConfig& cfg, const RunResult& r) {
  json j;
  j["steps_completed"] = r.steps_completed;
  j["final_train_loss"] = r.final_train_loss;
  j["final_val_loss"] = r.final_val_loss;
  j["totals"] = {{"intra_bytes", r.total_intra_bytes},
                 {"inter_bytes", r.total_inter_bytes},
                 {"sim_time_s", r.total_sim_time_s}};
  const double t = r.total_sim_time_s;
  j["effective_bandwidth_bps"] = {
      {"intra", t > 0.0 ? static_cast<double>(r.total_intra_bytes) * 8.0 / t : 0.0},
      {"inter", t > 0.0 ? static_cast<double>(r.total_inter_bytes) * 8.0 / t : 0.0}};
  j["config"] = config_json(cfg);
  std::ofstream os(path, std::ios::binary);
  os << j.dump(2) << '\n';
}

}  // namespace

void write_run_outputs(const ExperimentConfig& cfg, const RunResult& result,
                       const std::string& dir) {
  fs::create_directories(dir);
  write_metrics_csv(fs::path(dir) / "metrics.csv", result);
  write_ledger_csv(fs::path(dir) / "ledger.csv", result);
  write_summary_json(fs::path(dir) / "summary.json", cfg, result);
}

namespace {

// Applies one sweep axis value to a copy of the base config.
ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
  ExperimentConfig cfg = base;
  auto parse_num = [&](const char* what) {
    double d = 0.0;
    const auto slash = value.find('/');
    bool ok = false;
    if (slash != std::string::npos) {
      try {
        const double p = std::stod(value.substr(0, slash));
        const double q = std::stod(value.substr(slash + 1));
        ok = q != 0.0;
        d = ok ? p / q : 0.0;
      } catch (const std::exception&) {
        ok = false;
      }
    } else {
      try {
        d = std::stod(value);
        ok = true;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) throw ConfigError(std::string("sweep value '") + value + "' is not " + what);
    return d;
  };

  if (axis == "compression") {
    const double c = parse_num("a number or fraction");
    cfg.replicator.compression = c;
    if (cfg.replicator.scheme == Scheme::DeMo) {
      const auto k = std::llround(c * static_cast<double>(cfg.replicator.chunk_size));
      cfg.replicator.top_k = static_cast<std::size_t>(
          std::min<long long>(std::max<long long>(k, 1),
                              static_cast<long long>(cfg.replicator.chunk_size)));
      cfg.replicator.compression = static_cast<double>(cfg.replicator.top_k) /
                                   static_cast<double>(cfg.replicator.chunk_size);
    }
  } else if (axis == "chunk_size") {
    // Preserve the compression ratio while the chunk geometry changes.
    const double ratio = effective_compression(cfg);
    const auto s = static_cast<std::size_t>(parse_num("a positive integer"));
    if (s == 0) throw ConfigError("sweep chunk_size must be positive");
    cfg.replicator.chunk_size = s;
    if (cfg.replicator.scheme == Scheme::DeMo) {
      const auto k = std::llround(ratio * static_cast<double>(s));
      cfg.replicator.top_k = static_cast<std::size_t>(
          std::min<long long>(std::max<long long>(k, 1), static_cast<long long>(s)));
      cfg.replicator.compression =
          static_cast<double>(cfg.replicator.top_k) / static_cast<double>(s);
    }
  } else if (axis == "top_k") {
    const auto k = static_cast<std::size_t>(parse_num("a positive integer"));
    cfg.replicator.top_k = k;
    if (cfg.replicator.chunk_size > 0) {
      cfg.replicator.compression =
          static_cast<double>(k) / static_cast<double>(cfg.replicator.chunk_size);
    }
  } else if (axis == "sign") {
    if (value == "on" || value == "true" || value == "1") cfg.replicator.sign_mode = true;
    else if (value == "off" || value == "false" || value == "0") cfg.replicator.sign_mode = false;
    else throw ConfigError("sweep sign values are on/off");
  } else if (axis == "transfer_dtype") {
    if (value == "fp32") cfg.replicator.transfer_dtype = TransferDtype::Fp32;
    else if (value == "fp16") cfg.replicator.transfer_dtype = TransferDtype::Fp16;
    else if (value == "ternary") cfg.replicator.transfer_dtype = TransferDtype::Ternary;
    else throw ConfigError("sweep transfer_dtype values are fp32/fp16/ternary");
  } else if (axis == "scheme") {
    if (value == "demo") cfg.replicator.scheme = Scheme::DeMo;
    else if (value == "random") cfg.replicator.scheme = Scheme::Random;
    else if (value == "striding") cfg.replicator.scheme = Scheme::Striding;
    else if (value == "diloco") cfg.replicator.scheme = Scheme::DiLoCo;
    else if (value == "full") {
      cfg.replicator.scheme = Scheme::Full;
      cfg.replicator.compression = 1.0;
    } else {
      throw ConfigError("sweep scheme values are demo/random/striding/diloco/full");
    }
  } else if (axis == "inter_bandwidth_mbps") {
    cfg.link.inter_node_bandwidth = parse_num("a number") * 1e6;
  } else {
    throw ConfigError("unknown sweep axis '" + axis +
                      "' (compression, chunk_size, top_k, sign, transfer_dtype, scheme, "
                      "inter_bandwidth_mbps)");
  }
  validate_config(cfg);
  return cfg;
}

std::string sanitize(const std::string& v) {
  std::string out;
  for (char c : v) {
    out.push_back((std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '.' || c == '-')
                      ? c
                      : '_');
  }
  return out;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<std::string>& values, const std::string& out_dir) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  SweepResult sweep;
  sweep.axis = axis;
  for (const std::string& value : values) {
    SweepPoint point;
    point.value = value;
    point.out_dir = (fs::path(out_dir) / (axis + "-" + sanitize(value))).string();
    try {
      ExperimentConfig cfg = apply_axis(base, axis, value);
      cfg.out_dir = point.out_dir;
      Trainer trainer(cfg);
      try {
        trainer.run(point.result);
        point.ok = true;
      } catch (const TrainingError& e) {
        point.error = e.what();
      }
      write_run_outputs(cfg, point.result, point.out_dir);
    } catch (const ConfigError& e) {
      point.error = e.what();
    }
    sweep.points.push_back(std::move(point));
  }
  write_sweep_csv(sweep, out_dir);
  return sweep;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os(fs::path(out_dir) / "sweep.csv", std::ios::binary);
  os << sweep.axis
     << ",status,steps_completed,final_train_loss,final_val_loss,total_intra_bytes,"
        "total_inter_bytes,total_sim_time_s\n";
  for (const SweepPoint& p : sweep.points) {
    os << p.value << ',' << (p.ok ? "ok" : "failed") << ',' << p.result.steps_completed << ',';
    if (p.ok) {
      os << format_double(p.result.final_train_loss) << ','
         << format_double(p.result.final_val_loss) << ',';
    } else {
      os << ",,";
    }
    os << p.result.total_intra_bytes << ',' << p.result.total_inter_bytes << ','
       << format_double(p.result.total_sim_time_s) << '\n';
  }
}

}  // namespace demosim
