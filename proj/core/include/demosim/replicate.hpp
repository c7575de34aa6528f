#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "demosim/transform.hpp"
#include "demosim/vec.hpp"

namespace demosim {

enum class Scheme : uint8_t { DeMo = 1, Random = 2, Striding = 3, DiLoCo = 4, Full = 5 };

enum class TransferDtype : uint8_t { Fp32, Fp16, Ternary };

std::string scheme_name(Scheme s);
std::string dtype_name(TransferDtype d);

// Value width on the wire in bits; fixed by the dtype alone.
std::size_t value_bits(TransferDtype d);

// Payload bytes for a message of n_values values plus n_indices 32-bit
// indices: ceil((n_values * value_bits + n_indices * 32) / 8).
uint64_t wire_bytes(std::size_t n_values, std::size_t n_indices, TransferDtype d);

struct ReplicatorConfig {
  Scheme scheme = Scheme::DeMo;
  std::size_t chunk_size = 32;
  std::size_t top_k = 4;       // DeMo only
  double compression = 0.125;  // fraction of components exchanged per step
  bool sign_mode = true;
  TransferDtype transfer_dtype = TransferDtype::Fp32;
  uint64_t seed = 0;  // shared by all replicas; drives Random selection

  // Period for Striding and DiLoCo, round(1 / compression), at least 1.
  std::size_t period() const;
};

// One replica's contribution to a synchronize call. Values are stored after
// any sign or dtype narrowing, so merging them reproduces the receiver side.
struct CompressedUpdate {
  Scheme scheme = Scheme::Full;
  uint64_t step = 0;
  uint32_t shard_id = 0;
  uint64_t length = 0;  // length of the vector this update describes
  bool empty = false;   // DiLoCo between sync points: no traffic at all

  // DeMo: per chunk top_k (frequency index, coefficient) pairs, chunk major.
  std::size_t chunk_size = 0;
  std::size_t top_k = 0;
  std::vector<uint32_t> freq_indices;

  std::vector<double> values;
  uint64_t bytes = 0;  // payload size on the wire

  std::size_t value_count() const { return values.size(); }
};

struct EncodeResult {
  CompressedUpdate update;
  // Exactly what the sender removes from (or accounts as shared out of) its
  // local state: untouched by sign_mode and dtype narrowing.
  DenseVector local_q;
};

// Selects the components of v this replica transmits at the given step and
// packages them. Selection depends only on (cfg, step, shard_id, v.size()),
// never on the replica's identity.
EncodeResult select_and_encode(std::span<const double> v, const ReplicatorConfig& cfg,
                               uint64_t step, uint32_t shard_id);

// The index set a Random or Striding replicator transmits, ascending. Every
// replica derives the same set locally, which is why those schemes send no
// indices on the wire.
std::vector<uint32_t> selected_indices(const ReplicatorConfig& cfg, uint64_t step,
                                       uint32_t shard_id, std::size_t length);

// Merges one update per replica into the group update Q (elementwise mean;
// DeMo averages in the frequency domain, then inverts). All updates must
// agree on scheme, step, shard and length, and none may be empty.
DenseVector decode_and_merge(std::span<const CompressedUpdate> updates,
                             const ReplicatorConfig& cfg);

// Wire form: [scheme tag u8][value count u64 LE][indices u32 LE, DeMo only]
// [values packed per dtype]. Total size is bytes + 9.
std::vector<std::byte> serialize(const CompressedUpdate& u, TransferDtype d);

// Round trips serialize(); values come back at wire precision. The template
// supplies the fields that never travel (step, shard, length, chunk geometry).
CompressedUpdate deserialize(std::span<const std::byte> buf, TransferDtype d,
                             const CompressedUpdate& shape_template);

// Round to nearest even through IEEE binary16 and back.
double narrow_to_fp16(double x);

// Round to nearest even through IEEE binary32 and back.
double narrow_to_fp32(double x);

}  // namespace demosim
