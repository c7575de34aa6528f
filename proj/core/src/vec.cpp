#include "demosim/vec.hpp"

#include <cstdio>

namespace demosim {

void require_finite(std::span<const double> v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s contains a non-finite value (%g at index %zu)",
                    what.c_str(), v[i], i);
      throw TrainingError(buf);
    }
  }
}

DenseVector mean_of(std::span<const DenseVector> vs) {
  DenseVector out(vs.empty() ? 0 : vs.front().size(), 0.0);
  for (const DenseVector& v : vs) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(vs.size());
  for (double& x : out) x /= n;
  return out;
}

}  // namespace demosim
