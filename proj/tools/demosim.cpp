// Command line front end: run one experiment, sweep an axis, or verify the
// simulator's internal consistency.

#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "demosim/config.hpp"
#include "demosim/trainer.hpp"
#include "demosim/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kExperimentFailure = 1;
constexpr int kConfigError = 2;

struct CommonFlags {
  std::optional<std::string> out;
  std::optional<uint64_t> seed;
  std::optional<uint64_t> steps;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--out", flags.out, "Output directory (overrides out_dir)");
  cmd->add_option("--seed", flags.seed, "Base seed (overrides seed)");
  cmd->add_option("--steps", flags.steps, "Step count (overrides steps)");
}

demosim::ExperimentConfig load_with_overrides(const std::string& path,
                                              const CommonFlags& flags) {
  demosim::ExperimentConfig cfg = demosim::load_config(path);
  if (flags.out.has_value()) cfg.out_dir = *flags.out;
  if (flags.seed.has_value()) {
    cfg.seed = *flags.seed;
    if (!cfg.replicator_seed_set) cfg.replicator.seed = cfg.seed;
  }
  if (flags.steps.has_value()) cfg.steps = *flags.steps;
  demosim::validate_config(cfg);
  return cfg;
}

std::vector<std::string> split_values(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

int run_command(const std::string& config_path, const CommonFlags& flags) {
  const demosim::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  demosim::Trainer trainer(cfg);
  demosim::RunResult result;
  try {
    trainer.run(result);
  } catch (const demosim::TrainingError& e) {
    demosim::write_run_outputs(cfg, result, cfg.out_dir);
    std::cerr << "experiment failed: " << e.what() << '\n';
    std::cerr << "partial metrics written to " << cfg.out_dir << '\n';
    return kExperimentFailure;
  }
  demosim::write_run_outputs(cfg, result, cfg.out_dir);
  std::cout << "completed " << result.steps_completed << " steps"
            << ", final train loss " << demosim::format_double(result.final_train_loss)
            << ", final val loss " << demosim::format_double(result.final_val_loss) << '\n';
  std::cout << "totals: intra " << result.total_intra_bytes << " B, inter "
            << result.total_inter_bytes << " B, sim time "
            << demosim::format_double(result.total_sim_time_s) << " s\n";
  std::cout << "outputs written to " << cfg.out_dir << '\n';
  return kOk;
}

int sweep_command(const std::string& config_path, const CommonFlags& flags,
                  const std::string& axis, const std::string& values_csv) {
  const demosim::ExperimentConfig cfg = load_with_overrides(config_path, flags);
  const std::vector<std::string> values = split_values(values_csv);
  const demosim::SweepResult sweep = demosim::run_sweep(cfg, axis, values, cfg.out_dir);
  bool any_failed = false;
  for (const demosim::SweepPoint& p : sweep.points) {
    std::cout << axis << " = " << p.value << ": " << (p.ok ? "ok" : "failed");
    if (p.ok) {
      std::cout << ", final val loss " << demosim::format_double(p.result.final_val_loss);
    } else {
      std::cout << " (" << p.error << ")";
      any_failed = true;
    }
    std::cout << '\n';
  }
  std::cout << "sweep outputs written to " << cfg.out_dir << '\n';
  return any_failed ? kExperimentFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of decoupled-momentum distributed training"};
  app.require_subcommand(1);

  std::string run_config;
  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", run_config, "Path to the config file")->required();
  add_common(run, run_flags);

  std::string sweep_config;
  std::string sweep_axis;
  std::string sweep_values;
  CommonFlags sweep_flags;
  CLI::App* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
  sweep->add_option("config", sweep_config, "Path to the base config file")->required();
  sweep->add_option("--axis", sweep_axis, "Config axis to vary")->required();
  sweep->add_option("--values", sweep_values, "Comma separated axis values")->required();
  add_common(sweep, sweep_flags);

  CLI::App* verify = app.add_subcommand("verify", "Run the internal consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed()) return run_command(run_config, run_flags);
    if (sweep->parsed()) return sweep_command(sweep_config, sweep_flags, sweep_axis,
                                              sweep_values);
    if (verify->parsed()) {
      return demosim::print_report(std::cout, demosim::run_verification()) == 0
                 ? kOk
                 : kExperimentFailure;
    }
  } catch (const demosim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const demosim::TrainingError& e) {
    std::cerr << "experiment failed: " << e.what() << '\n';
    return kExperimentFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExperimentFailure;
  }
  return kConfigError;
}
