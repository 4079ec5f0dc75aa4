#pragma once

// Bit-granular writer and reader. Fields are written most-significant bit
// first; the final byte is zero-filled.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikecodec/error.hpp"

namespace spikecodec {

class BitBuffer {
public:
  BitBuffer() = default;

  // Appends the low `width` bits of `value`, MSB first. Width 0 is a no-op.
  void write_bits(std::uint64_t value, unsigned width) {
    if (width > 64 || (width < 64 && (value >> width) != 0)) [[unlikely]] {
      bad_field(value, width);
    }
    if (width == 0) return;
    if (width <= 56) {
      // Pull the partial last byte back into a register; used + width <= 63.
      const unsigned used = static_cast<unsigned>(length_bits_ & 7);
      std::uint64_t acc = value;
      if (used != 0) {
        acc |= static_cast<std::uint64_t>(bytes_.back() >> (8 - used)) << width;
        bytes_.pop_back();
      }
      unsigned total = used + width;
      for (; total >= 8; total -= 8) {
        bytes_.push_back(static_cast<std::uint8_t>(acc >> (total - 8)));
      }
      if (total != 0) bytes_.push_back(static_cast<std::uint8_t>(acc << (8 - total)));
      length_bits_ += width;
      return;
    }
    write_bits(value >> 32, width - 32);
    write_bits(value & 0xffffffffu, 32);
  }

  void reserve_bits(std::size_t bits) { bytes_.reserve((length_bits_ + bits + 7) >> 3); }

  void push_bit(bool bit) {
    const std::size_t byte = length_bits_ >> 3;
    if (byte == bytes_.size()) {
      bytes_.push_back(0);
    }
    if (bit) {
      bytes_[byte] |= static_cast<std::uint8_t>(0x80u >> (length_bits_ & 7));
    }
    ++length_bits_;
  }

  // Appends whole bytes; requires the buffer to be byte-aligned.
  void write_bytes(std::span<const std::uint8_t> bytes) {
    if ((length_bits_ & 7) != 0) {
      for (auto b : bytes) write_bits(b, 8);
      return;
    }
    bytes_.insert(bytes_.end(), bytes.begin(), bytes.end());
    length_bits_ += 8 * bytes.size();
  }

  // Appends every bit of another buffer.
  void append(const BitBuffer& other) {
    const std::size_t whole = other.length_bits_ >> 3;
    for (std::size_t i = 0; i < whole; ++i) write_bits(other.bytes_[i], 8);
    const unsigned tail = static_cast<unsigned>(other.length_bits_ & 7);
    if (tail != 0) write_bits(other.bytes_[whole] >> (8 - tail), tail);
  }

  bool bit(std::size_t index) const {
    return ((bytes_[index >> 3] >> (7 - (index & 7))) & 1u) != 0;
  }

  std::size_t length_bits() const noexcept { return length_bits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> release() && { return std::move(bytes_); }

  // "0101..." rendering, handy in tests and diagnostics.
  std::string to_string() const {
    std::string s;
    s.reserve(length_bits_);
    for (std::size_t i = 0; i < length_bits_; ++i) s.push_back(bit(i) ? '1' : '0');
    return s;
  }

  friend bool operator==(const BitBuffer&, const BitBuffer&) = default;

private:
  [[noreturn, gnu::cold, gnu::noinline]] static void bad_field(std::uint64_t value, unsigned width) {
    if (width > 64) {
      throw DomainError("bit field width " + std::to_string(width) + " exceeds 64");
    }
    throw DomainError("value " + std::to_string(value) + " does not fit in " +
                      std::to_string(width) + " bits");
  }

  std::vector<std::uint8_t> bytes_;
  std::size_t length_bits_ = 0;
};

// Read position over a borrowed byte sequence.
class BitCursor {
public:
  explicit BitCursor(std::span<const std::uint8_t> source)
      : source_(source), limit_bits_(8 * source.size()) {}

  // Restricts reading to the first `limit_bits` bits of `source`.
  BitCursor(std::span<const std::uint8_t> source, std::size_t limit_bits)
      : source_(source), limit_bits_(limit_bits) {
    if (limit_bits > 8 * source.size()) {
      throw DomainError("bit limit exceeds source length");
    }
  }

  explicit BitCursor(const BitBuffer& buffer)
      : BitCursor(buffer.bytes(), buffer.length_bits()) {}

  std::uint64_t read_bits(unsigned width) {
    if (width > 64 || width > remaining()) [[unlikely]] bad_read(width);
    if (width == 0) return 0;
    const std::size_t first = position_ >> 3;
    if (width <= 56 && first + 8 <= source_.size()) {
      std::uint64_t window;
      std::memcpy(&window, source_.data() + first, 8);
      if constexpr (std::endian::native == std::endian::little) window = __builtin_bswap64(window);
      const unsigned used = static_cast<unsigned>(position_ & 7);
      position_ += width;
      return (window << used) >> (64 - width);
    }
    // Near the end of the source: byte at a time.
    std::uint64_t value = 0;
    while (width > 0) {
      const unsigned used = static_cast<unsigned>(position_ & 7);
      const unsigned room = 8 - used;
      const unsigned chunk = width < room ? width : room;
      const unsigned byte = source_[position_ >> 3];
      const unsigned bits = (byte >> (room - chunk)) & ((1u << chunk) - 1);
      value = (value << chunk) | bits;
      width -= chunk;
      position_ += chunk;
    }
    return value;
  }

  std::size_t position_bits() const noexcept { return position_; }
  std::size_t remaining() const noexcept { return limit_bits_ - position_; }

  void skip_to_byte_boundary() {
    position_ = (position_ + 7) & ~std::size_t{7};
    if (position_ > limit_bits_) position_ = limit_bits_;
  }

private:
  [[noreturn, gnu::cold, gnu::noinline]] void bad_read(unsigned width) const {
    if (width > 64) {
      throw DomainError("bit field width " + std::to_string(width) + " exceeds 64");
    }
    throw TruncatedStream("read of " + std::to_string(width) + " bits at bit " +
                          std::to_string(position_) + " runs past the end (" +
                          std::to_string(limit_bits_) + " bits)");
  }

  std::span<const std::uint8_t> source_;
  std::size_t limit_bits_;
  std::size_t position_ = 0;
};

}  // namespace spikecodec
