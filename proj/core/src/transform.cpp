#include "demosim/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "demosim/common.hpp"

namespace demosim {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

ChunkLayout chunk_layout(std::size_t length, std::size_t chunk_size) {
  if (chunk_size == 0) throw ConfigError("chunk size must be positive");
  ChunkLayout layout;
  layout.length = length;
  layout.chunk_size = chunk_size;
  layout.num_chunks = (length + chunk_size - 1) / chunk_size;
  layout.pad = layout.num_chunks * chunk_size - length;
  return layout;
}

std::vector<double> chunk(std::span<const double> v, const ChunkLayout& layout) {
  if (v.size() != layout.length) throw ConfigError("chunk: layout does not match the vector");
  std::vector<double> rows(layout.num_chunks * layout.chunk_size, 0.0);
  std::copy(v.begin(), v.end(), rows.begin());
  return rows;
}

std::vector<double> unchunk(std::span<const double> rows, const ChunkLayout& layout) {
  if (rows.size() != layout.num_chunks * layout.chunk_size) {
    throw ConfigError("unchunk: row buffer does not match the layout");
  }
  return std::vector<double>(rows.begin(), rows.begin() + static_cast<long>(layout.length));
}

DctPlan::DctPlan(std::size_t size) : size_(size), basis_(size * size) {
  if (size == 0) throw ConfigError("transform size must be positive");
  const double n = static_cast<double>(size);
  const double c0 = std::sqrt(1.0 / n);
  const double cj = std::sqrt(2.0 / n);
  for (std::size_t j = 0; j < size; ++j) {
    const double scale = j == 0 ? c0 : cj;
    for (std::size_t i = 0; i < size; ++i) {
      basis_[j * size + i] =
          scale * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) *
                           static_cast<double>(j) / (2.0 * n));
    }
  }
}

void DctPlan::forward(std::span<const double> x, std::span<double> out) const {
  for (std::size_t j = 0; j < size_; ++j) {
    const double* row = basis_.data() + j * size_;
    double acc = 0.0;
    for (std::size_t i = 0; i < size_; ++i) acc += row[i] * x[i];
    out[j] = acc;
  }
}

void DctPlan::inverse(std::span<const double> coeffs, std::span<double> out) const {
  for (std::size_t i = 0; i < size_; ++i) out[i] = 0.0;
  for (std::size_t j = 0; j < size_; ++j) {
    const double c = coeffs[j];
    if (c == 0.0) continue;
    const double* row = basis_.data() + j * size_;
    for (std::size_t i = 0; i < size_; ++i) out[i] += c * row[i];
  }
}

const DctPlan& dct_plan(std::size_t size) {
  thread_local std::map<std::size_t, DctPlan> cache;
  auto it = cache.find(size);
  if (it == cache.end()) it = cache.emplace(size, DctPlan(size)).first;
  return it->second;
}

std::vector<double> dct2(std::span<const double> x) {
  std::vector<double> out(x.size());
  dct_plan(x.size()).forward(x, out);
  return out;
}

std::vector<double> idct3(std::span<const double> coeffs) {
  std::vector<double> out(coeffs.size());
  dct_plan(coeffs.size()).inverse(coeffs, out);
  return out;
}

Extraction extract_fast_components(std::span<const double> v, std::size_t chunk_size,
                                   std::size_t top_k) {
  if (top_k == 0 || top_k > chunk_size) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "top_k %zu out of range for chunk size %zu", top_k,
                  chunk_size);
    throw ConfigError(buf);
  }
  Extraction ex;
  ex.selection.layout = chunk_layout(v.size(), chunk_size);
  ex.selection.top_k = top_k;
  const ChunkLayout& layout = ex.selection.layout;
  const std::size_t s = chunk_size;
  const std::vector<double> rows = chunk(v, layout);

  const DctPlan& plan = dct_plan(s);
  std::vector<double> coeffs(s), sparse(s), recon(layout.num_chunks * s);
  std::vector<uint32_t> order(s);
  ex.selection.indices.reserve(layout.num_chunks * top_k);
  ex.selection.coeffs.reserve(layout.num_chunks * top_k);

  for (std::size_t c = 0; c < layout.num_chunks; ++c) {
    std::span<const double> row(rows.data() + c * s, s);
    plan.forward(row, coeffs);

    if (top_k == s) {
      // Full band: the extraction is the identity, exactly.
      for (uint32_t j = 0; j < s; ++j) ex.selection.indices.push_back(j);
      ex.selection.coeffs.insert(ex.selection.coeffs.end(), coeffs.begin(), coeffs.end());
      std::copy(row.begin(), row.end(), recon.begin() + static_cast<long>(c * s));
      continue;
    }

    std::iota(order.begin(), order.end(), 0u);
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(top_k), order.end(),
                      [&](uint32_t a, uint32_t b) {
                        const double ma = std::fabs(coeffs[a]);
                        const double mb = std::fabs(coeffs[b]);
                        if (ma != mb) return ma > mb;
                        return a < b;
                      });
    std::sort(order.begin(), order.begin() + static_cast<long>(top_k));

    std::fill(sparse.begin(), sparse.end(), 0.0);
    for (std::size_t k = 0; k < top_k; ++k) {
      const uint32_t j = order[k];
      ex.selection.indices.push_back(j);
      ex.selection.coeffs.push_back(coeffs[j]);
      sparse[j] = coeffs[j];
    }
    plan.inverse(sparse, std::span<double>(recon.data() + c * s, s));
  }

  ex.fast = unchunk(recon, layout);
  ex.residual.resize(v.size());
  if (top_k == s) {
    std::fill(ex.residual.begin(), ex.residual.end(), 0.0);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) ex.residual[i] = v[i] - ex.fast[i];
  }
  return ex;
}

void sign_transform(std::span<double> v) {
  for (double& x : v) {
    x = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
}

}  // namespace demosim
