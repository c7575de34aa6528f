#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "demosim/common.hpp"

namespace demosim {

using DenseVector = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Throws TrainingError naming the offending index if v contains NaN or Inf.
void require_finite(std::span<const double> v, const std::string& what);

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double squared_norm(std::span<const double> v) { return dot(v, v); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

inline double max_abs(std::span<const double> v) {
  double worst = 0.0;
  for (double x : v) {
    double a = std::fabs(x);
    if (a > worst) worst = a;
  }
  return worst;
}

// Elementwise mean of equally sized vectors, accumulated in member order.
DenseVector mean_of(std::span<const DenseVector> vs);

}  // namespace demosim
