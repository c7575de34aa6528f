#include "demosim/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace demosim {

std::string mode_name(ClusterMode m) {
  return m == ClusterMode::HybridSharded ? "hybrid_sharded" : "ddp_all_gather";
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::DemoSgd ? "demo_sgd" : "decoupled_adamw";
}

std::string dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::QuadraticTarget: return "quadratic_target";
    case DatasetKind::GaussianBlobs: return "gaussian_blobs";
    case DatasetKind::LinearRegression: return "linear_regression";
  }
  return "unknown";
}

std::string model_kind_name(ModelKind k) {
  return k == ModelKind::Quadratic ? "quadratic" : "mlp";
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class Issues {
 public:
  void add(const std::string& msg) { msgs_.push_back(msg); }

  template <typename... Args>
  void addf(const char* fmt, Args... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    msgs_.push_back(buf);
  }

  void raise_if_any() const {
    if (msgs_.empty()) return;
    std::string joined = "invalid configuration:";
    for (const std::string& m : msgs_) {
      joined += "\n  - ";
      joined += m;
    }
    throw ConfigError(joined);
  }

  bool empty() const { return msgs_.empty(); }

 private:
  std::vector<std::string> msgs_;
};

// Accepts plain numbers and p/q fractions ("1/16").
bool parse_double(const std::string& v, double& out) {
  const auto slash = v.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      out = std::stod(v, &used);
      return used == v.size();
    }
    const std::string num = trim(v.substr(0, slash));
    const std::string den = trim(v.substr(slash + 1));
    double p = std::stod(num, &used);
    if (used != num.size()) return false;
    double q = std::stod(den, &used);
    if (used != den.size() || q == 0.0) return false;
    out = p / q;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_u64(const std::string& v, uint64_t& out) {
  if (v.empty() || v[0] == '-') return false;
  try {
    std::size_t used = 0;
    out = std::stoull(v, &used);
    return used == v.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "off" || v == "0" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

bool parse_dims(const std::string& v, std::vector<std::size_t>& out) {
  out.clear();
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    uint64_t d = 0;
    if (!parse_u64(trim(part), d) || d == 0) return false;
    out.push_back(static_cast<std::size_t>(d));
  }
  return !out.empty();
}

struct KeyHandlerContext {
  ExperimentConfig& cfg;
  Issues& issues;
  bool compression_set = false;
  bool top_k_set = false;
  bool model_dim_set = false;
  bool layer_dims_set = false;
};

void apply_key(KeyHandlerContext& ctx, const std::string& key, const std::string& value) {
  ExperimentConfig& cfg = ctx.cfg;
  Issues& issues = ctx.issues;
  uint64_t u = 0;
  double d = 0.0;
  bool b = false;

  auto bad = [&](const char* what) {
    issues.addf("%s: cannot parse '%s' as %s", key.c_str(), value.c_str(), what);
  };

  if (key == "topology.nodes") {
    if (parse_u64(value, u) && u >= 1) cfg.topology.nodes = u; else bad("a positive integer");
  } else if (key == "topology.accels_per_node") {
    if (parse_u64(value, u) && u >= 1) cfg.topology.accels_per_node = u;
    else bad("a positive integer");
  } else if (key == "topology.mode") {
    if (value == "hybrid_sharded") cfg.topology.mode = ClusterMode::HybridSharded;
    else if (value == "ddp_all_gather") cfg.topology.mode = ClusterMode::DdpAllGather;
    else bad("hybrid_sharded | ddp_all_gather");
  } else if (key == "model.kind") {
    if (value == "quadratic") cfg.model.kind = ModelKind::Quadratic;
    else if (value == "mlp") cfg.model.kind = ModelKind::Mlp;
    else bad("quadratic | mlp");
  } else if (key == "model.dim") {
    if (parse_u64(value, u) && u >= 1) {
      cfg.model.layer_dims = {static_cast<std::size_t>(u)};
      ctx.model_dim_set = true;
    } else bad("a positive integer");
  } else if (key == "model.layer_dims") {
    std::vector<std::size_t> dims;
    if (parse_dims(value, dims) && dims.size() >= 2) {
      cfg.model.layer_dims = dims;
      ctx.layer_dims_set = true;
    } else bad("a comma list of at least two positive integers");
  } else if (key == "model.activation") {
    if (value == "tanh") cfg.model.activation = Activation::Tanh;
    else if (value == "relu") cfg.model.activation = Activation::Relu;
    else bad("tanh | relu");
  } else if (key == "model.loss") {
    if (value == "mse") cfg.model.loss = LossKind::Mse;
    else if (value == "cross_entropy") cfg.model.loss = LossKind::CrossEntropy;
    else bad("mse | cross_entropy");
  } else if (key == "model.pad_params") {
    if (parse_bool(value, b)) cfg.pad_params = b; else bad("a boolean");
  } else if (key == "dataset.kind") {
    if (value == "quadratic_target") cfg.dataset.kind = DatasetKind::QuadraticTarget;
    else if (value == "gaussian_blobs") cfg.dataset.kind = DatasetKind::GaussianBlobs;
    else if (value == "linear_regression") cfg.dataset.kind = DatasetKind::LinearRegression;
    else bad("quadratic_target | gaussian_blobs | linear_regression");
  } else if (key == "dataset.size") {
    if (parse_u64(value, u) && u >= 1) cfg.dataset.size = u; else bad("a positive integer");
  } else if (key == "dataset.noise") {
    if (parse_double(value, d) && d >= 0.0) cfg.dataset.noise = d;
    else bad("a non-negative number");
  } else if (key == "optimizer.kind") {
    if (value == "demo_sgd") cfg.optimizer.kind = OptimizerKind::DemoSgd;
    else if (value == "decoupled_adamw") cfg.optimizer.kind = OptimizerKind::DecoupledAdamW;
    else bad("demo_sgd | decoupled_adamw");
  } else if (key == "optimizer.learning_rate") {
    if (parse_double(value, d)) cfg.optimizer.learning_rate = d; else bad("a number");
  } else if (key == "optimizer.momentum_decay") {
    if (parse_double(value, d)) cfg.optimizer.momentum_decay = d; else bad("a number");
  } else if (key == "optimizer.adam_beta1") {
    if (parse_double(value, d)) cfg.optimizer.adam_beta1 = d; else bad("a number");
  } else if (key == "optimizer.adam_beta2") {
    if (parse_double(value, d)) cfg.optimizer.adam_beta2 = d; else bad("a number");
  } else if (key == "optimizer.adam_eps") {
    if (parse_double(value, d)) cfg.optimizer.adam_eps = d; else bad("a number");
  } else if (key == "optimizer.weight_decay") {
    if (parse_double(value, d)) cfg.optimizer.weight_decay = d; else bad("a number");
  } else if (key == "replicator.scheme") {
    if (value == "demo") cfg.replicator.scheme = Scheme::DeMo;
    else if (value == "random") cfg.replicator.scheme = Scheme::Random;
    else if (value == "striding") cfg.replicator.scheme = Scheme::Striding;
    else if (value == "diloco") cfg.replicator.scheme = Scheme::DiLoCo;
    else if (value == "full") cfg.replicator.scheme = Scheme::Full;
    else bad("demo | random | striding | diloco | full");
  } else if (key == "replicator.chunk_size") {
    if (parse_u64(value, u) && u >= 1) cfg.replicator.chunk_size = u;
    else bad("a positive integer");
  } else if (key == "replicator.top_k") {
    if (parse_u64(value, u) && u >= 1) {
      cfg.replicator.top_k = u;
      ctx.top_k_set = true;
    } else bad("a positive integer");
  } else if (key == "replicator.compression") {
    if (parse_double(value, d)) {
      cfg.replicator.compression = d;
      ctx.compression_set = true;
    } else bad("a number or fraction");
  } else if (key == "replicator.sign") {
    if (parse_bool(value, b)) cfg.replicator.sign_mode = b; else bad("a boolean");
  } else if (key == "replicator.transfer_dtype") {
    if (value == "fp32") cfg.replicator.transfer_dtype = TransferDtype::Fp32;
    else if (value == "fp16") cfg.replicator.transfer_dtype = TransferDtype::Fp16;
    else if (value == "ternary") cfg.replicator.transfer_dtype = TransferDtype::Ternary;
    else bad("fp32 | fp16 | ternary");
  } else if (key == "replicator.seed") {
    if (parse_u64(value, u)) {
      cfg.replicator.seed = u;
      cfg.replicator_seed_set = true;
    } else bad("an unsigned integer");
  } else if (key == "link.intra_node_bandwidth") {
    if (parse_double(value, d)) cfg.link.intra_node_bandwidth = d; else bad("a number");
  } else if (key == "link.inter_node_bandwidth") {
    if (parse_double(value, d)) cfg.link.inter_node_bandwidth = d; else bad("a number");
  } else if (key == "link.compute_time_per_step") {
    if (parse_double(value, d)) cfg.link.compute_time_per_step = d; else bad("a number");
  } else if (key == "steps") {
    if (parse_u64(value, u) && u >= 1) cfg.steps = u; else bad("a positive integer");
  } else if (key == "batch_size") {
    if (parse_u64(value, u) && u >= 1) cfg.batch_size = u; else bad("a positive integer");
  } else if (key == "eval_every") {
    if (parse_u64(value, u) && u >= 1) cfg.eval_every = u; else bad("a positive integer");
  } else if (key == "warmup_fraction") {
    if (parse_double(value, d)) cfg.warmup_fraction = d; else bad("a number");
  } else if (key == "seed") {
    if (parse_u64(value, u)) cfg.seed = u; else bad("an unsigned integer");
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else {
    issues.addf("unknown key '%s'", key.c_str());
  }
}

}  // namespace

std::size_t padded_param_len(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.model.param_count();
  const std::size_t shards =
      cfg.topology.mode == ClusterMode::HybridSharded ? cfg.topology.accels_per_node : 1;
  if (n % shards == 0) return n;
  return n + shards - n % shards;
}

double effective_compression(const ExperimentConfig& cfg) {
  const ReplicatorConfig& r = cfg.replicator;
  switch (r.scheme) {
    case Scheme::DeMo:
      return static_cast<double>(r.top_k) / static_cast<double>(r.chunk_size);
    case Scheme::Full:
      return 1.0;
    default:
      return r.compression;
  }
}

namespace {

// Shared by parse_config and validate_config so syntax problems and value
// problems can surface in a single report.
void collect_violations(ExperimentConfig& cfg, Issues& issues) {
  const Model& m = cfg.model;

  if (m.kind == ModelKind::Mlp && m.layer_dims.size() < 2) {
    issues.add("model.layer_dims: an mlp needs at least input and output dims");
  }
  if (m.kind == ModelKind::Quadratic && m.layer_dims.size() != 1) {
    issues.add("model.dim: a quadratic model takes a single dimension");
  }

  OptimizerConfig& opt = cfg.optimizer;
  if (!(opt.learning_rate > 0.0)) issues.add("optimizer.learning_rate must be positive");
  if (!(opt.momentum_decay >= 0.0 && opt.momentum_decay < 1.0)) {
    issues.add("optimizer.momentum_decay must lie in [0, 1)");
  }
  if (!(opt.adam_beta1 >= 0.0 && opt.adam_beta1 < 1.0)) {
    issues.add("optimizer.adam_beta1 must lie in [0, 1)");
  }
  if (!(opt.adam_beta2 >= 0.0 && opt.adam_beta2 < 1.0)) {
    issues.add("optimizer.adam_beta2 must lie in [0, 1)");
  }
  if (!(opt.adam_eps > 0.0)) issues.add("optimizer.adam_eps must be positive");
  if (!(opt.weight_decay >= 0.0)) issues.add("optimizer.weight_decay must be non-negative");

  ReplicatorConfig& rep = cfg.replicator;
  if (!(rep.compression > 0.0 && rep.compression <= 1.0)) {
    issues.addf("replicator.compression %g must lie in (0, 1]", rep.compression);
  }
  if (rep.scheme == Scheme::DeMo) {
    if (rep.chunk_size == 0) issues.add("replicator.chunk_size must be positive");
    if (rep.top_k == 0 || rep.top_k > rep.chunk_size) {
      issues.addf("replicator.top_k %zu must lie in [1, chunk_size %zu]", rep.top_k,
                  rep.chunk_size);
    }
  }
  if (rep.scheme == Scheme::Full && cfg.replicator.compression != 1.0) {
    // Full always exchanges everything; a conflicting ratio is a config bug.
    issues.addf("replicator.compression %g conflicts with the full scheme",
                rep.compression);
  }
  if (!cfg.replicator_seed_set) rep.seed = cfg.seed;

  if (!(cfg.link.intra_node_bandwidth > 0.0)) {
    issues.add("link.intra_node_bandwidth must be positive");
  }
  if (!(cfg.link.inter_node_bandwidth > 0.0)) {
    issues.add("link.inter_node_bandwidth must be positive");
  }
  if (!(cfg.link.compute_time_per_step > 0.0)) {
    issues.add("link.compute_time_per_step must be positive");
  }
  if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0)) {
    issues.add("warmup_fraction must lie in [0, 1)");
  }
  if (cfg.dataset.size < 10) issues.add("dataset.size must be at least 10");

  // Dataset and model must agree on shapes before any expensive work runs.
  cfg.dataset.input_dim = m.input_dim();
  cfg.dataset.output_dim = m.output_dim();
  if (m.kind == ModelKind::Quadratic && cfg.dataset.kind != DatasetKind::QuadraticTarget) {
    issues.add("a quadratic model pairs with dataset.kind = quadratic_target");
  }
  if (m.kind == ModelKind::Mlp && cfg.dataset.kind == DatasetKind::QuadraticTarget) {
    issues.add("dataset.kind = quadratic_target pairs with model.kind = quadratic");
  }
  if (m.loss == LossKind::CrossEntropy && m.kind == ModelKind::Mlp &&
      cfg.dataset.kind != DatasetKind::GaussianBlobs) {
    issues.add("cross entropy training needs dataset.kind = gaussian_blobs");
  }
  if (cfg.dataset.kind == DatasetKind::GaussianBlobs && m.kind == ModelKind::Mlp &&
      m.loss != LossKind::CrossEntropy) {
    issues.add("gaussian_blobs is a labeled dataset; set model.loss = cross_entropy");
  }

  const std::size_t world = cfg.topology.world_size();
  const std::size_t train_size = cfg.dataset.size * 8 / 10;
  if (world * cfg.batch_size > train_size) {
    issues.addf("global batch (%zu ranks x %zu) exceeds the training pool of %zu examples",
                world, cfg.batch_size, train_size);
  }

  const std::size_t param_count = m.param_count();
  const std::size_t shards =
      cfg.topology.mode == ClusterMode::HybridSharded ? cfg.topology.accels_per_node : 1;
  if (param_count % shards != 0 && !cfg.pad_params) {
    issues.addf("param_count %zu is not divisible by accels_per_node %zu and padding is off",
                param_count, shards);
  }

  if (issues.empty()) {
    // Shard level checks need the final geometry.
    const std::size_t padded = padded_param_len(cfg);
    const std::size_t extent = padded / shards;
    std::size_t min_real = param_count;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t off = s * extent;
      const std::size_t real = off >= param_count ? 0 : std::min(extent, param_count - off);
      min_real = std::min(min_real, real);
    }
    if (min_real == 0) {
      issues.addf("param_count %zu leaves an empty shard across %zu accelerators", param_count,
                  shards);
    } else if (rep.scheme == Scheme::Random || rep.scheme == Scheme::Striding) {
      if (std::llround(rep.compression * static_cast<double>(min_real)) < 1) {
        issues.addf("replicator.compression %g selects nothing from a shard of %zu values",
                    rep.compression, min_real);
      }
      if (rep.scheme == Scheme::Striding && rep.period() > min_real) {
        issues.addf("striding period %zu exceeds the shortest shard (%zu values)", rep.period(),
                    min_real);
      }
    }
  }

}

}  // namespace

void validate_config(ExperimentConfig& cfg) {
  Issues issues;
  collect_violations(cfg, issues);
  issues.raise_if_any();
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  Issues issues;
  KeyHandlerContext ctx{cfg, issues};

  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                          : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;

    std::string line = trim(raw);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      issues.addf("line %zu: expected 'key = value', got '%s'", lineno, line.c_str());
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      issues.addf("line %zu: empty key or value", lineno);
      continue;
    }
    apply_key(ctx, key, value);
  }

  // Couple DeMo's two compression knobs before validation sees them.
  if (cfg.replicator.scheme == Scheme::DeMo) {
    if (ctx.compression_set && !ctx.top_k_set) {
      const auto k = std::llround(cfg.replicator.compression *
                                  static_cast<double>(cfg.replicator.chunk_size));
      cfg.replicator.top_k = static_cast<std::size_t>(std::clamp<long long>(
          k, 1, static_cast<long long>(cfg.replicator.chunk_size)));
    }
    cfg.replicator.compression = static_cast<double>(cfg.replicator.top_k) /
                                 static_cast<double>(cfg.replicator.chunk_size);
  } else if (cfg.replicator.scheme == Scheme::Full && !ctx.compression_set) {
    cfg.replicator.compression = 1.0;
  }

  collect_violations(cfg, issues);
  issues.raise_if_any();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace demosim
