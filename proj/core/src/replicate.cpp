#include "demosim/replicate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>

#include "demosim/rng.hpp"

namespace demosim {

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::DeMo: return "demo";
    case Scheme::Random: return "random";
    case Scheme::Striding: return "striding";
    case Scheme::DiLoCo: return "diloco";
    case Scheme::Full: return "full";
  }
  return "unknown";
}

std::string dtype_name(TransferDtype d) {
  switch (d) {
    case TransferDtype::Fp32: return "fp32";
    case TransferDtype::Fp16: return "fp16";
    case TransferDtype::Ternary: return "ternary";
  }
  return "unknown";
}

std::size_t value_bits(TransferDtype d) {
  switch (d) {
    case TransferDtype::Fp32: return 32;
    case TransferDtype::Fp16: return 16;
    case TransferDtype::Ternary: return 2;
  }
  return 32;
}

uint64_t wire_bytes(std::size_t n_values, std::size_t n_indices, TransferDtype d) {
  const uint64_t bits = static_cast<uint64_t>(n_values) * value_bits(d) +
                        static_cast<uint64_t>(n_indices) * 32;
  return (bits + 7) / 8;
}

std::size_t ReplicatorConfig::period() const {
  const auto p = std::llround(1.0 / compression);
  return p < 1 ? 1 : static_cast<std::size_t>(p);
}

double narrow_to_fp32(double x) {
  if (std::isnan(x)) return x;
  constexpr double kMax = 3.4028235677973366e38;  // halfway point to binary32 overflow
  if (std::fabs(x) >= kMax) {
    return std::copysign(std::numeric_limits<double>::infinity(), x);
  }
  return static_cast<double>(static_cast<float>(x));
}

double narrow_to_fp16(double x) {
  if (std::isnan(x)) return x;
  const double a = std::fabs(x);
  if (a == 0.0) return x;
  const double sign = std::signbit(x) ? -1.0 : 1.0;
  // 65520 is halfway between the largest binary16 normal and the overflow
  // step; round to nearest even sends it to infinity.
  if (a >= 65520.0) return sign * std::numeric_limits<double>::infinity();
  int e2;
  std::frexp(a, &e2);
  const int exp = e2 - 1;  // a in [2^exp, 2^(exp+1))
  const double ulp = std::ldexp(1.0, exp >= -14 ? exp - 10 : -24);
  const double q = a / ulp;  // exact: power of two scaling, q < 2^53
  const double r = std::nearbyint(q);
  const double res = r * ulp;
  if (res >= 65520.0) return sign * std::numeric_limits<double>::infinity();
  return sign * res;
}

namespace {

uint16_t fp16_bits(double x) {
  const double v = narrow_to_fp16(x);
  const uint16_t sign = std::signbit(v) ? 0x8000 : 0;
  if (std::isnan(v)) return static_cast<uint16_t>(sign | 0x7e00);
  const double a = std::fabs(v);
  if (a == 0.0) return sign;
  if (std::isinf(v)) return static_cast<uint16_t>(sign | 0x7c00);
  if (a < 0x1.0p-14) {
    const auto mant = static_cast<uint16_t>(std::llround(std::ldexp(a, 24)));
    return static_cast<uint16_t>(sign | mant);
  }
  const int e = std::ilogb(a);
  const double m = std::ldexp(a, -e);  // [1, 2)
  const auto mant = static_cast<uint16_t>(std::llround((m - 1.0) * 1024.0));
  return static_cast<uint16_t>(sign | ((e + 15) << 10) | mant);
}

double fp16_from_bits(uint16_t b) {
  const double sign = (b & 0x8000) ? -1.0 : 1.0;
  const int exp = (b >> 10) & 0x1f;
  const int mant = b & 0x3ff;
  if (exp == 0x1f) {
    if (mant != 0) return std::numeric_limits<double>::quiet_NaN();
    return sign * std::numeric_limits<double>::infinity();
  }
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  return sign * std::ldexp(1.0 + static_cast<double>(mant) / 1024.0, exp - 15);
}

void append_u32(std::vector<std::byte>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void append_u64(std::vector<std::byte>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

uint32_t read_u32(std::span<const std::byte> buf, std::size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[off + i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::span<const std::byte> buf, std::size_t off) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[off + i]) << (8 * i);
  return v;
}

// Applies the wire-side value treatment: signum quantization when requested
// (always for ternary) and dtype narrowing. fp32 keeps full precision in
// memory; only the byte accounting and serialized form are 32 bit.
void condition_values(std::vector<double>& values, const ReplicatorConfig& cfg) {
  if (cfg.sign_mode || cfg.transfer_dtype == TransferDtype::Ternary) {
    sign_transform(values);
  }
  if (cfg.transfer_dtype == TransferDtype::Fp16) {
    for (double& v : values) v = narrow_to_fp16(v);
  }
}

std::size_t selection_count(double compression, std::size_t length) {
  const auto c = std::llround(compression * static_cast<double>(length));
  if (c < 1) {
    char buf[112];
    std::snprintf(buf, sizeof buf,
                  "compression %g selects no components from a vector of length %zu",
                  compression, length);
    throw ConfigError(buf);
  }
  return std::min(static_cast<std::size_t>(c), length);
}

}  // namespace

std::vector<uint32_t> selected_indices(const ReplicatorConfig& cfg, uint64_t step,
                                       uint32_t shard_id, std::size_t length) {
  std::vector<uint32_t> idx;
  if (cfg.scheme == Scheme::Random) {
    const std::size_t count = selection_count(cfg.compression, length);
    std::vector<uint32_t> all(length);
    std::iota(all.begin(), all.end(), 0u);
    Rng rng(mix_seed(cfg.seed, step, shard_id));
    rng.shuffle(all);
    idx.assign(all.begin(), all.begin() + static_cast<long>(count));
    std::sort(idx.begin(), idx.end());
    return idx;
  }
  if (cfg.scheme == Scheme::Striding) {
    const std::size_t n = cfg.period();
    if (n > length) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "stride period %zu exceeds vector length %zu", n, length);
      throw ConfigError(buf);
    }
    const std::size_t offset = static_cast<std::size_t>(step % n);
    for (std::size_t i = offset; i < length; i += n) idx.push_back(static_cast<uint32_t>(i));
    return idx;
  }
  throw ConfigError("selected_indices applies to random and striding schemes only");
}

EncodeResult select_and_encode(std::span<const double> v, const ReplicatorConfig& cfg,
                               uint64_t step, uint32_t shard_id) {
  EncodeResult res;
  CompressedUpdate& u = res.update;
  u.scheme = cfg.scheme;
  u.step = step;
  u.shard_id = shard_id;
  u.length = v.size();

  switch (cfg.scheme) {
    case Scheme::Full: {
      u.values.assign(v.begin(), v.end());
      res.local_q.assign(v.begin(), v.end());
      break;
    }
    case Scheme::DiLoCo: {
      if (step % cfg.period() != 0) {
        u.empty = true;
        res.local_q.assign(v.size(), 0.0);
        break;
      }
      u.values.assign(v.begin(), v.end());
      res.local_q.assign(v.begin(), v.end());
      break;
    }
    case Scheme::Random:
    case Scheme::Striding: {
      const std::vector<uint32_t> idx = selected_indices(cfg, step, shard_id, v.size());
      u.values.reserve(idx.size());
      res.local_q.assign(v.size(), 0.0);
      for (uint32_t i : idx) {
        u.values.push_back(v[i]);
        res.local_q[i] = v[i];
      }
      break;
    }
    case Scheme::DeMo: {
      Extraction ex = extract_fast_components(v, cfg.chunk_size, cfg.top_k);
      u.chunk_size = cfg.chunk_size;
      u.top_k = cfg.top_k;
      u.freq_indices = std::move(ex.selection.indices);
      u.values = std::move(ex.selection.coeffs);
      res.local_q = std::move(ex.fast);
      break;
    }
  }

  condition_values(u.values, cfg);
  u.bytes = wire_bytes(u.values.size(), u.freq_indices.size(), cfg.transfer_dtype);
  return res;
}

DenseVector decode_and_merge(std::span<const CompressedUpdate> updates,
                             const ReplicatorConfig& cfg) {
  if (updates.empty()) throw ProtocolError("decode_and_merge needs at least one update");
  const CompressedUpdate& ref = updates.front();
  if (ref.scheme != cfg.scheme) throw ProtocolError("update scheme does not match the config");
  for (const CompressedUpdate& u : updates) {
    if (u.scheme != ref.scheme || u.step != ref.step || u.shard_id != ref.shard_id ||
        u.length != ref.length) {
      throw ProtocolError("replicas disagree on scheme, step, shard or length");
    }
    if (u.empty) throw ProtocolError("cannot merge an update with no payload");
    if (u.values.size() != ref.values.size()) {
      throw ProtocolError("replicas disagree on transmitted value count");
    }
  }

  const double r = static_cast<double>(updates.size());
  const std::size_t len = static_cast<std::size_t>(ref.length);
  DenseVector q(len, 0.0);

  switch (cfg.scheme) {
    case Scheme::Full:
    case Scheme::DiLoCo: {
      if (ref.values.size() != len) throw ProtocolError("full update has the wrong length");
      for (const CompressedUpdate& u : updates) {
        for (std::size_t i = 0; i < len; ++i) q[i] += u.values[i];
      }
      for (double& x : q) x /= r;
      break;
    }
    case Scheme::Random:
    case Scheme::Striding: {
      const std::vector<uint32_t> idx = selected_indices(cfg, ref.step, ref.shard_id, len);
      if (ref.values.size() != idx.size()) {
        throw ProtocolError("selected value count does not match the derived index set");
      }
      for (std::size_t j = 0; j < idx.size(); ++j) {
        double acc = 0.0;
        for (const CompressedUpdate& u : updates) acc += u.values[j];
        q[idx[j]] = acc / r;
      }
      break;
    }
    case Scheme::DeMo: {
      if (ref.chunk_size != cfg.chunk_size || ref.top_k != cfg.top_k) {
        throw ProtocolError("chunk geometry does not match the config");
      }
      const ChunkLayout layout = chunk_layout(len, ref.chunk_size);
      const std::size_t expected = layout.num_chunks * ref.top_k;
      std::vector<double> grid(layout.num_chunks * layout.chunk_size, 0.0);
      for (const CompressedUpdate& u : updates) {
        if (u.freq_indices.size() != expected || u.values.size() != expected) {
          throw ProtocolError("frequency payload does not match the chunk layout");
        }
        for (std::size_t t = 0; t < expected; ++t) {
          const std::size_t c = t / ref.top_k;
          const uint32_t j = u.freq_indices[t];
          if (j >= layout.chunk_size) throw ProtocolError("frequency index out of range");
          grid[c * layout.chunk_size + j] += u.values[t];
        }
      }
      for (double& x : grid) x /= r;
      const DctPlan& plan = dct_plan(layout.chunk_size);
      std::vector<double> rows(grid.size());
      for (std::size_t c = 0; c < layout.num_chunks; ++c) {
        plan.inverse(std::span<const double>(grid.data() + c * layout.chunk_size,
                                             layout.chunk_size),
                     std::span<double>(rows.data() + c * layout.chunk_size,
                                       layout.chunk_size));
      }
      q = unchunk(rows, layout);
      break;
    }
  }
  return q;
}

std::vector<std::byte> serialize(const CompressedUpdate& u, TransferDtype d) {
  std::vector<std::byte> out;
  out.reserve(9 + u.bytes);
  out.push_back(static_cast<std::byte>(u.scheme));
  append_u64(out, u.values.size());
  if (u.scheme == Scheme::DeMo) {
    for (uint32_t idx : u.freq_indices) append_u32(out, idx);
  }
  switch (d) {
    case TransferDtype::Fp32: {
      for (double v : u.values) {
        append_u32(out, std::bit_cast<uint32_t>(static_cast<float>(narrow_to_fp32(v))));
      }
      break;
    }
    case TransferDtype::Fp16: {
      for (double v : u.values) {
        const uint16_t bits = fp16_bits(v);
        out.push_back(static_cast<std::byte>(bits & 0xff));
        out.push_back(static_cast<std::byte>((bits >> 8) & 0xff));
      }
      break;
    }
    case TransferDtype::Ternary: {
      uint8_t pack = 0;
      std::size_t filled = 0;
      for (double v : u.values) {
        const uint8_t code = v > 0.0 ? 1 : (v < 0.0 ? 2 : 0);
        pack |= static_cast<uint8_t>(code << (2 * filled));
        if (++filled == 4) {
          out.push_back(static_cast<std::byte>(pack));
          pack = 0;
          filled = 0;
        }
      }
      if (filled != 0) out.push_back(static_cast<std::byte>(pack));
      break;
    }
  }
  return out;
}

CompressedUpdate deserialize(std::span<const std::byte> buf, TransferDtype d,
                             const CompressedUpdate& shape_template) {
  if (buf.size() < 9) throw ProtocolError("serialized update shorter than its header");
  CompressedUpdate u = shape_template;
  const auto tag = static_cast<uint8_t>(buf[0]);
  if (tag < 1 || tag > 5) throw ProtocolError("unknown scheme tag");
  u.scheme = static_cast<Scheme>(tag);
  if (u.scheme != shape_template.scheme) {
    throw ProtocolError("serialized scheme does not match the expected scheme");
  }
  const uint64_t count = read_u64(buf, 1);
  std::size_t off = 9;

  u.freq_indices.clear();
  if (u.scheme == Scheme::DeMo) {
    if (buf.size() < off + count * 4) throw ProtocolError("truncated frequency indices");
    u.freq_indices.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      u.freq_indices.push_back(read_u32(buf, off));
      off += 4;
    }
  }

  u.values.clear();
  u.values.reserve(count);
  switch (d) {
    case TransferDtype::Fp32: {
      if (buf.size() < off + count * 4) throw ProtocolError("truncated fp32 payload");
      for (uint64_t i = 0; i < count; ++i) {
        u.values.push_back(static_cast<double>(std::bit_cast<float>(read_u32(buf, off))));
        off += 4;
      }
      break;
    }
    case TransferDtype::Fp16: {
      if (buf.size() < off + count * 2) throw ProtocolError("truncated fp16 payload");
      for (uint64_t i = 0; i < count; ++i) {
        const auto lo = static_cast<uint16_t>(buf[off]);
        const auto hi = static_cast<uint16_t>(buf[off + 1]);
        u.values.push_back(fp16_from_bits(static_cast<uint16_t>(lo | (hi << 8))));
        off += 2;
      }
      break;
    }
    case TransferDtype::Ternary: {
      const std::size_t packed = (count * 2 + 7) / 8;
      if (buf.size() < off + packed) throw ProtocolError("truncated ternary payload");
      static constexpr double kCode[4] = {0.0, 1.0, -1.0, 0.0};
      for (uint64_t i = 0; i < count; ++i) {
        const auto byte = static_cast<uint8_t>(buf[off + i / 4]);
        u.values.push_back(kCode[(byte >> (2 * (i % 4))) & 0x3]);
      }
      break;
    }
  }

  u.empty = count == 0;
  u.bytes = wire_bytes(u.values.size(), u.freq_indices.size(), d);
  return u;
}

}  // namespace demosim
