#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace demosim {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Self-contained consistency suite behind the `verify` CLI subcommand. Each
// check is cheap enough to run on every invocation.
std::vector<CheckResult> run_verification();

// Individual checks, exposed so tests can drive them directly.
CheckResult check_gradient_oracle();
CheckResult check_chunk_round_trip();

// Transform pair injectable so a deliberately broken transform must fail.
using TransformFn = std::function<std::vector<double>(std::span<const double>)>;
CheckResult check_transform_round_trip(const TransformFn& forward, const TransformFn& inverse);

CheckResult check_energy_split();
CheckResult check_selection_optimality();
CheckResult check_single_group_collapse();
CheckResult check_full_band_collapse();
CheckResult check_byte_ratios();
CheckResult check_index_determinism();
CheckResult check_merge_fidelity();

// Prints one line per check; returns 0 if all passed, 1 otherwise.
int print_report(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace demosim
