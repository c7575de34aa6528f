#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace demosim {

// How a flat vector of the given length splits into fixed-size chunks. The
// final chunk is zero padded up to chunk_size; pad values never travel back
// into the flat vector.
struct ChunkLayout {
  std::size_t length = 0;
  std::size_t chunk_size = 0;
  std::size_t num_chunks = 0;
  std::size_t pad = 0;  // zeros appended to the last chunk
};

ChunkLayout chunk_layout(std::size_t length, std::size_t chunk_size);

// Row major num_chunks x chunk_size buffer with the pad tail zeroed.
std::vector<double> chunk(std::span<const double> v, const ChunkLayout& layout);

// Inverse of chunk: concatenates rows and drops the pad tail.
std::vector<double> unchunk(std::span<const double> rows, const ChunkLayout& layout);

// Orthonormal DCT-II and its inverse (DCT-III) on vectors of a fixed size,
// evaluated against a precomputed basis. The pair is an isometry: inverse is
// the transpose of forward, and coefficient energy equals signal energy.
class DctPlan {
 public:
  explicit DctPlan(std::size_t size);

  std::size_t size() const { return size_; }

  void forward(std::span<const double> x, std::span<double> out) const;
  void inverse(std::span<const double> coeffs, std::span<double> out) const;

 private:
  std::size_t size_;
  std::vector<double> basis_;  // basis_[j * size_ + i] = c_j cos(pi (2i+1) j / (2 size_))
};

// Plans are cached per size; safe to call concurrently from separate threads.
const DctPlan& dct_plan(std::size_t size);

std::vector<double> dct2(std::span<const double> x);
std::vector<double> idct3(std::span<const double> coeffs);

// Per chunk, the top_k frequency indices by coefficient magnitude (ties break
// toward the lower index) with their coefficients, chunk major and sorted by
// index within each chunk.
struct FreqSelection {
  ChunkLayout layout;
  std::size_t top_k = 0;
  std::vector<uint32_t> indices;  // num_chunks * top_k entries, local to each chunk
  std::vector<double> coeffs;
};

struct Extraction {
  FreqSelection selection;
  std::vector<double> fast;      // reconstruction of the selected frequencies
  std::vector<double> residual;  // input - fast, elementwise
};

// Splits a vector into the energy carried by its top_k frequencies per chunk
// and the remainder. top_k == chunk_size copies the input exactly and leaves
// a zero residual. Requires 1 <= top_k <= chunk_size.
Extraction extract_fast_components(std::span<const double> v, std::size_t chunk_size,
                                   std::size_t top_k);

// Maps each value to -1, 0, or +1.
void sign_transform(std::span<double> v);

}  // namespace demosim
