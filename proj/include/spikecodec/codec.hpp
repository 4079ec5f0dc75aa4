#pragma once

// Storage formats for binary event matrices, their bit costs, and the
// multi-sample .spkm container.
//
// Width convention: width(D) is the number of bits needed to index D values,
// 0 when D <= 1. Units use width(N), steps width(T), and offsets into a list
// of S events width(S + 1).

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikecodec/bitio.hpp"
#include "spikecodec/error.hpp"
#include "spikecodec/event_matrix.hpp"

namespace spikecodec {

constexpr unsigned width(std::uint64_t domain) noexcept {
  return domain <= 1 ? 0u : static_cast<unsigned>(std::bit_width(domain - 1));
}

enum class StorageFormat : std::uint8_t {
  Dense = 0b00,
  Coo = 0b01,
  CompressedTime = 0b10,
  CompressedUnits = 0b11,
};

inline constexpr std::array<StorageFormat, 4> kAllFormats = {
    StorageFormat::Dense, StorageFormat::Coo, StorageFormat::CompressedTime,
    StorageFormat::CompressedUnits};

constexpr unsigned kFormatTagBits = 2;

constexpr std::string_view format_name(StorageFormat f) noexcept {
  switch (f) {
    case StorageFormat::Dense: return "dense";
    case StorageFormat::Coo: return "coo";
    case StorageFormat::CompressedTime: return "time";
    case StorageFormat::CompressedUnits: return "units";
  }
  return "?";
}

inline StorageFormat parse_format(std::string_view name) {
  for (auto f : kAllFormats) {
    if (format_name(f) == name) return f;
  }
  throw DomainError("unknown storage format '" + std::string(name) + "'");
}

// `Paper` reproduces the published cost formulas, which size offsets with
// ceil(log2 S); `Exact` counts the bits the encoder emits (width(S + 1)).
enum class CostMode { Paper, Exact };

namespace detail {

inline void check_counts(std::uint64_t n, std::uint64_t t, std::uint64_t s) {
  if (n == 0 || t == 0) throw DomainError("cost functions need N, T >= 1");
  if (s > n * t) {
    throw DomainError("S=" + std::to_string(s) + " exceeds N*T=" +
                      std::to_string(n * t));
  }
}

inline std::uint64_t offset_width(std::uint64_t s, CostMode mode) {
  return mode == CostMode::Paper ? width(s) : width(s + 1);
}

}  // namespace detail

inline std::uint64_t cost_dense(std::uint64_t n, std::uint64_t t) {
  detail::check_counts(n, t, 0);
  return n * t;
}

inline std::uint64_t cost_coo(std::uint64_t n, std::uint64_t t, std::uint64_t s) {
  detail::check_counts(n, t, s);
  return s * (width(n) + width(t));
}

inline std::uint64_t cost_time(std::uint64_t n, std::uint64_t t, std::uint64_t s,
                               CostMode mode = CostMode::Exact) {
  detail::check_counts(n, t, s);
  return s * width(t) + (n - 1) * detail::offset_width(s, mode);
}

inline std::uint64_t cost_units(std::uint64_t n, std::uint64_t t, std::uint64_t s,
                                CostMode mode = CostMode::Exact) {
  detail::check_counts(n, t, s);
  return s * width(n) + (t - 1) * detail::offset_width(s, mode);
}

inline std::uint64_t cost(StorageFormat f, std::uint64_t n, std::uint64_t t,
                          std::uint64_t s, CostMode mode = CostMode::Exact) {
  switch (f) {
    case StorageFormat::Dense: return cost_dense(n, t);
    case StorageFormat::Coo: return cost_coo(n, t, s);
    case StorageFormat::CompressedTime: return cost_time(n, t, s, mode);
    case StorageFormat::CompressedUnits: return cost_units(n, t, s, mode);
  }
  throw DomainError("invalid storage format");
}

struct CostReport {
  std::uint64_t n = 0;
  std::uint64_t t = 0;
  std::uint64_t s = 0;
  std::uint64_t bits_dense = 0;
  std::uint64_t bits_coo = 0;
  std::uint64_t bits_time = 0;
  std::uint64_t bits_units = 0;
  StorageFormat best = StorageFormat::Dense;

  std::uint64_t bits(StorageFormat f) const noexcept {
    switch (f) {
      case StorageFormat::Dense: return bits_dense;
      case StorageFormat::Coo: return bits_coo;
      case StorageFormat::CompressedTime: return bits_time;
      case StorageFormat::CompressedUnits: return bits_units;
    }
    return 0;
  }
  std::uint64_t best_bits() const noexcept { return bits(best); }

  friend bool operator==(const CostReport&, const CostReport&) = default;
};

// Ties go to the lowest tag.
inline CostReport cost_report(std::uint64_t n, std::uint64_t t, std::uint64_t s,
                              CostMode mode = CostMode::Exact) {
  CostReport r{n,
               t,
               s,
               cost_dense(n, t),
               cost_coo(n, t, s),
               cost_time(n, t, s, mode),
               cost_units(n, t, s, mode),
               StorageFormat::Dense};
  for (auto f : kAllFormats) {
    if (r.bits(f) < r.bits(r.best)) r.best = f;
  }
  return r;
}

inline constexpr std::string_view kCostCsvHeader =
    "N,T,S,bits_dense,bits_coo,bits_time,bits_units,best";

inline void write_csv_row(std::ostream& out, const CostReport& r) {
  out << r.n << ',' << r.t << ',' << r.s << ',' << r.bits_dense << ','
      << r.bits_coo << ',' << r.bits_time << ',' << r.bits_units << ','
      << format_name(r.best) << '\n';
}

// ---------------------------------------------------------------------------
// Payload encoding

namespace detail {

inline void encode_dense(const EventMatrix& m, BitBuffer& out) {
  const std::uint64_t t_len = m.n_steps();
  const auto& events = m.events();
  std::size_t next = 0;
  std::vector<std::uint64_t> words((t_len + 63) / 64);
  for (std::uint64_t i = 0; i < m.n_units(); ++i) {
    std::fill(words.begin(), words.end(), 0);
    for (; next < events.size() && events[next].unit == i; ++next) {
      const std::uint64_t step = events[next].step;
      words[step / 64] |= std::uint64_t{1} << (63 - step % 64);
    }
    for (std::uint64_t w = 0; w < words.size(); ++w) {
      const std::uint64_t bits = std::min<std::uint64_t>(64, t_len - 64 * w);
      out.write_bits(bits == 64 ? words[w] : words[w] >> (64 - bits),
                     static_cast<unsigned>(bits));
    }
  }
}

// Shared by CompressedTime (major=unit) and CompressedUnits (major=step):
// minor indices grouped by major index, then the interior offsets.
inline void encode_compressed(const std::vector<Event>& events, bool unit_major,
                              std::uint64_t n_major, unsigned minor_bits,
                              BitBuffer& out) {
  const std::uint64_t s = events.size();
  std::vector<std::uint64_t> counts(n_major, 0);
  for (const auto& e : events) ++counts[unit_major ? e.unit : e.step];
  if (unit_major) {
    for (const auto& e : events) out.write_bits(e.step, minor_bits);
  } else {
    // Stable counting sort by step; units stay ascending within a step.
    std::vector<std::uint64_t> next(n_major, 0);
    for (std::uint64_t k = 1; k < n_major; ++k) next[k] = next[k - 1] + counts[k - 1];
    std::vector<std::uint32_t> minor(s);
    for (const auto& e : events) minor[next[e.step]++] = e.unit;
    for (auto u : minor) out.write_bits(u, minor_bits);
  }
  const unsigned offset_bits = width(s + 1);
  std::uint64_t cumulative = 0;
  for (std::uint64_t k = 0; k + 1 < n_major; ++k) {
    cumulative += counts[k];
    out.write_bits(cumulative, offset_bits);
  }
}

inline void decode_compressed(BitCursor& in, bool unit_major,
                              std::uint64_t n_major, std::uint64_t n_minor,
                              std::uint64_t s, std::vector<Event>& events) {
  const unsigned minor_bits = width(n_minor);
  const unsigned offset_bits = width(s + 1);
  const std::size_t needed = s * minor_bits + (n_major - 1) * offset_bits;
  if (in.remaining() < needed) {
    throw TruncatedStream("compressed payload needs " + std::to_string(needed) +
                          " bits, " + std::to_string(in.remaining()) + " left");
  }
  std::vector<std::uint32_t> minor(s);
  for (auto& v : minor) {
    const auto raw = in.read_bits(minor_bits);
    if (raw >= n_minor) throw CorruptStream("index out of range in payload");
    v = static_cast<std::uint32_t>(raw);
  }
  std::vector<std::uint64_t> bounds(n_major + 1);
  bounds.front() = 0;
  bounds.back() = s;
  for (std::uint64_t k = 1; k < n_major; ++k) {
    bounds[k] = in.read_bits(offset_bits);
    if (bounds[k] > s || bounds[k] < bounds[k - 1]) {
      throw CorruptStream("non-monotone or out-of-range offset " +
                          std::to_string(bounds[k]) + " (S=" +
                          std::to_string(s) + ")");
    }
  }
  events.resize(s);
  for (std::uint64_t k = 0; k < n_major; ++k) {
    const auto major = static_cast<std::uint32_t>(k);
    for (std::uint64_t j = bounds[k]; j < bounds[k + 1]; ++j) {
      if (j > bounds[k] && minor[j] <= minor[j - 1]) {
        throw CorruptStream("indices within a group must be strictly increasing");
      }
      events[j] = unit_major ? Event{major, minor[j]} : Event{minor[j], major};
    }
  }
}

}  // namespace detail

// Appends the payload of `m` in format `f`; exactly cost(f, N, T, S) bits.
inline void encode_into(const EventMatrix& m, StorageFormat f, BitBuffer& out) {
  const unsigned unit_bits = width(m.n_units());
  const unsigned step_bits = width(m.n_steps());
  switch (f) {
    case StorageFormat::Dense:
      detail::encode_dense(m, out);
      return;
    case StorageFormat::Coo:
      for (const auto& e : m.events()) {
        out.write_bits(e.unit, unit_bits);
        out.write_bits(e.step, step_bits);
      }
      return;
    case StorageFormat::CompressedTime:
      detail::encode_compressed(m.events(), true, m.n_units(), step_bits, out);
      return;
    case StorageFormat::CompressedUnits:
      detail::encode_compressed(m.events(), false, m.n_steps(), unit_bits, out);
      return;
  }
  throw DomainError("invalid storage format");
}

inline BitBuffer encode(const EventMatrix& m, StorageFormat f) {
  BitBuffer out;
  out.reserve_bits(cost(f, m.n_units(), m.n_steps(), m.event_count(), CostMode::Exact));
  encode_into(m, f, out);
  return out;
}

// Reads one payload from the cursor. `s` is ignored for Dense.
inline EventMatrix decode(BitCursor& in, std::uint64_t n, std::uint64_t t,
                          std::uint64_t s, StorageFormat f) {
  EventMatrix shape(n, t);
  if (f != StorageFormat::Dense && s > n * t) {
    throw CorruptStream("event count " + std::to_string(s) +
                        " exceeds matrix size");
  }
  std::vector<Event> events;
  switch (f) {
    case StorageFormat::Dense: {
      if (in.remaining() < n * t) {
        throw TruncatedStream("dense payload needs " + std::to_string(n * t) +
                              " bits, " + std::to_string(in.remaining()) +
                              " left");
      }
      events.reserve(std::min(s, n * t));  // s is only a hint here
      for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t base = 0; base < t; base += 64) {
          const auto bits = static_cast<unsigned>(std::min<std::uint64_t>(64, t - base));
          // Left-align so the earliest step is the top bit.
          std::uint64_t word = in.read_bits(bits) << (64 - bits);
          while (word != 0) {
            const auto lead = static_cast<unsigned>(std::countl_zero(word));
            word &= ~(std::uint64_t{1} << (63 - lead));
            events.push_back({static_cast<std::uint32_t>(i),
                              static_cast<std::uint32_t>(base + lead)});
          }
        }
      }
      break;
    }
    case StorageFormat::Coo: {
      const unsigned unit_bits = width(n);
      const unsigned step_bits = width(t);
      if (in.remaining() < s * (unit_bits + step_bits)) {
        throw TruncatedStream("coo payload truncated");
      }
      events.resize(s);
      for (std::uint64_t k = 0; k < s; ++k) {
        const auto unit = in.read_bits(unit_bits);
        const auto step = in.read_bits(step_bits);
        if (unit >= n || step >= t) {
          throw CorruptStream("coordinate out of range in payload");
        }
        const Event e{static_cast<std::uint32_t>(unit), static_cast<std::uint32_t>(step)};
        if (k > 0 && !(events[k - 1] < e)) {
          throw CorruptStream("coordinates not in strictly increasing order");
        }
        events[k] = e;
      }
      break;
    }
    case StorageFormat::CompressedTime:
      detail::decode_compressed(in, true, n, t, s, events);
      break;
    case StorageFormat::CompressedUnits: {
      std::vector<Event> by_step;
      detail::decode_compressed(in, false, t, n, s, by_step);
      // Stable counting sort by unit; steps stay ascending within a unit.
      std::vector<std::uint64_t> next(n + 1, 0);
      for (const auto& e : by_step) ++next[e.unit + 1];
      for (std::uint64_t i = 1; i <= n; ++i) next[i] += next[i - 1];
      events.resize(by_step.size());
      for (const auto& e : by_step) events[next[e.unit]++] = e;
      break;
    }
  }
  return EventMatrix(n, t, std::move(events));
}

// Decodes a standalone payload, which must be exactly the expected length.
inline EventMatrix decode(const BitBuffer& payload, std::uint64_t n,
                          std::uint64_t t, std::uint64_t s, StorageFormat f) {
  BitCursor in(payload);
  EventMatrix m = decode(in, n, t, s, f);
  if (in.remaining() != 0) {
    throw CorruptStream(std::to_string(in.remaining()) +
                        " trailing bits after payload");
  }
  return m;
}

// ---------------------------------------------------------------------------
// .spkm container
//
//   bytes 0-3   "SPKM"
//   byte  4     version
//   bytes 5-8   n_units       u32 big-endian
//   bytes 9-12  n_steps       u32
//   bytes 13-16 s_max         u32
//   bytes 17-20 sample_count  u32
//   then, bit-packed per sample: 2-bit format tag, S in width(s_max + 1)
//   bits (absent for Dense), payload. The last byte is zero-padded.

inline constexpr std::array<std::uint8_t, 4> kStreamMagic = {'S', 'P', 'K', 'M'};
inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 21;

struct StreamHeader {
  std::uint8_t version = kStreamVersion;
  std::uint32_t n_units = 0;
  std::uint32_t n_steps = 0;
  std::uint32_t s_max = 0;
  std::uint32_t sample_count = 0;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

// Bits one sample occupies inside a stream, tag and S-field included.
inline std::uint64_t packed_sample_bits(StorageFormat f, std::uint64_t n,
                                        std::uint64_t t, std::uint64_t s,
                                        std::uint64_t s_max) {
  const std::uint64_t s_field = f == StorageFormat::Dense ? 0 : width(s_max + 1);
  return kFormatTagBits + s_field + cost(f, n, t, s);
}

// Per-sample format choice: nullopt selects the cheapest payload.
using FormatChoice = std::optional<StorageFormat>;

inline StorageFormat choose_format(const EventMatrix& m, FormatChoice choice) {
  if (choice) return *choice;
  return cost_report(m.n_units(), m.n_steps(), m.event_count()).best;
}

struct PackedStream {
  StreamHeader header;
  std::vector<StorageFormat> formats;
  std::vector<std::uint8_t> bytes;
};

inline PackedStream pack_stream_detailed(std::span<const EventMatrix> samples,
                                         FormatChoice choice,
                                         std::uint64_t n_units = 0,
                                         std::uint64_t n_steps = 0) {
  if (!samples.empty()) {
    n_units = samples.front().n_units();
    n_steps = samples.front().n_steps();
  }
  if (n_units >= (std::uint64_t{1} << 32) || n_steps >= (std::uint64_t{1} << 32)) {
    throw ShapeError("stream dimensions must fit in 32 bits");
  }
  std::uint64_t s_max = 0;
  for (const auto& m : samples) {
    if (m.n_units() != n_units || m.n_steps() != n_steps) {
      throw ShapeError("all samples in a stream must share one shape");
    }
    s_max = std::max(s_max, m.event_count());
  }
  if (samples.size() >= (std::uint64_t{1} << 32)) {
    throw ShapeError("too many samples for one stream");
  }

  PackedStream packed;
  packed.header = {kStreamVersion, static_cast<std::uint32_t>(n_units),
                   static_cast<std::uint32_t>(n_steps),
                   static_cast<std::uint32_t>(s_max),
                   static_cast<std::uint32_t>(samples.size())};
  BitBuffer out;
  out.write_bytes(kStreamMagic);
  out.write_bits(packed.header.version, 8);
  out.write_bits(packed.header.n_units, 32);
  out.write_bits(packed.header.n_steps, 32);
  out.write_bits(packed.header.s_max, 32);
  out.write_bits(packed.header.sample_count, 32);

  const unsigned s_bits = width(s_max + 1);
  for (const auto& m : samples) {
    const StorageFormat f = choose_format(m, choice);
    packed.formats.push_back(f);
    out.write_bits(static_cast<std::uint8_t>(f), kFormatTagBits);
    if (f != StorageFormat::Dense) out.write_bits(m.event_count(), s_bits);
    encode_into(m, f, out);
  }
  packed.bytes = std::move(out).release();
  return packed;
}

inline std::vector<std::uint8_t> pack_stream(std::span<const EventMatrix> samples,
                                             FormatChoice choice = std::nullopt) {
  return pack_stream_detailed(samples, choice).bytes;
}

inline StreamHeader read_stream_header(BitCursor& in) {
  if (in.remaining() < 8 * kStreamHeaderBytes) {
    throw TruncatedStream("stream shorter than its 21-byte header");
  }
  for (auto expected : kStreamMagic) {
    if (in.read_bits(8) != expected) throw CorruptStream("bad magic, not an SPKM stream");
  }
  StreamHeader h;
  h.version = static_cast<std::uint8_t>(in.read_bits(8));
  if (h.version != kStreamVersion) {
    throw CorruptStream("unsupported stream version " + std::to_string(h.version));
  }
  h.n_units = static_cast<std::uint32_t>(in.read_bits(32));
  h.n_steps = static_cast<std::uint32_t>(in.read_bits(32));
  h.s_max = static_cast<std::uint32_t>(in.read_bits(32));
  h.sample_count = static_cast<std::uint32_t>(in.read_bits(32));
  if (h.sample_count > 0 && (h.n_units == 0 || h.n_steps == 0)) {
    throw CorruptStream("stream declares an empty matrix shape");
  }
  if (static_cast<std::uint64_t>(h.s_max) >
      static_cast<std::uint64_t>(h.n_units) * h.n_steps) {
    throw CorruptStream("s_max exceeds N*T");
  }
  return h;
}

struct UnpackedStream {
  StreamHeader header;
  std::vector<StorageFormat> formats;
  std::vector<EventMatrix> samples;
};

inline UnpackedStream unpack_stream_detailed(std::span<const std::uint8_t> bytes) {
  BitCursor in(bytes);
  UnpackedStream result;
  result.header = read_stream_header(in);
  const auto& h = result.header;
  const unsigned s_bits = width(std::uint64_t{h.s_max} + 1);
  for (std::uint32_t k = 0; k < h.sample_count; ++k) {
    const auto f = static_cast<StorageFormat>(in.read_bits(kFormatTagBits));
    std::uint64_t s = 0;
    if (f != StorageFormat::Dense) {
      s = in.read_bits(s_bits);
      if (s > h.s_max) throw CorruptStream("sample S exceeds stream s_max");
    }
    result.formats.push_back(f);
    result.samples.push_back(decode(in, h.n_units, h.n_steps, s, f));
  }
  if (in.remaining() >= 8) {
    throw CorruptStream("trailing bytes after the last sample");
  }
  if (in.remaining() > 0 && in.read_bits(static_cast<unsigned>(in.remaining())) != 0) {
    throw CorruptStream("nonzero padding bits");
  }
  return result;
}

inline std::vector<EventMatrix> unpack_stream(std::span<const std::uint8_t> bytes) {
  return unpack_stream_detailed(bytes).samples;
}

}  // namespace spikecodec
