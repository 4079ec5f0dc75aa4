#pragma once

// Minimal Standard MIDI File reader (formats 0 and 1). Only note on/off and
// tempo events are interpreted; everything else is skipped by length.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikecodec/error.hpp"
#include "spikecodec/synthdata.hpp"

namespace spikecodec::midi {

struct MidiNote {
  std::uint8_t pitch = 0;
  double onset_s = 0.0;
  double release_s = 0.0;
  std::uint8_t velocity = 0;
  std::uint8_t channel = 0;

  friend bool operator==(const MidiNote&, const MidiNote&) = default;
};

// Variable-length quantity: 7 bits per byte, high bit set on all but the
// last byte, at most 4 bytes.
inline std::uint32_t read_vlq(std::span<const std::uint8_t> bytes, std::size_t& pos,
                              std::size_t end) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    if (pos >= end) throw ParseError("truncated variable-length quantity", pos);
    const std::uint8_t b = bytes[pos++];
    value = (value << 7) | (b & 0x7Fu);
    if ((b & 0x80u) == 0) return value;
  }
  throw ParseError("variable-length quantity longer than 4 bytes", pos - 1);
}

inline std::uint32_t decode_vlq(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  return read_vlq(bytes, pos, bytes.size());
}

class TempoMap {
public:
  static constexpr std::uint32_t kDefaultTempo = 500000;  // us per quarter

  // `division` is the raw header field: ticks per quarter, or SMPTE when the
  // top bit is set.
  TempoMap(std::uint16_t division, std::vector<std::pair<std::uint64_t, std::uint32_t>> changes)
      : division_(division) {
    if (division == 0) throw ParseError("MIDI division of zero", 12);
    std::stable_sort(changes.begin(), changes.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& change : changes) {
      if (!entries_.empty() && entries_.back().first == change.first) {
        entries_.back().second = change.second;  // last one at a tick wins
      } else {
        entries_.push_back(change);
      }
    }
  }

  const std::vector<std::pair<std::uint64_t, std::uint32_t>>& entries() const noexcept {
    return entries_;
  }

  double seconds_at(std::uint64_t tick) const {
    if (division_ & 0x8000u) {
      const int fps = -static_cast<std::int8_t>(division_ >> 8);
      const int ticks_per_frame = division_ & 0xFF;
      if (fps <= 0 || ticks_per_frame == 0) throw ParseError("invalid SMPTE division", 12);
      return static_cast<double>(tick) / (fps * ticks_per_frame);
    }
    const double tpq = division_;
    double seconds = 0.0;
    std::uint64_t last_tick = 0;
    std::uint32_t tempo = kDefaultTempo;
    for (const auto& [at, us] : entries_) {
      if (at >= tick) break;
      seconds += static_cast<double>(at - last_tick) * tempo / (1e6 * tpq);
      last_tick = at;
      tempo = us;
    }
    return seconds + static_cast<double>(tick - last_tick) * tempo / (1e6 * tpq);
  }

private:
  std::uint16_t division_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> entries_;
};

namespace detail {

struct NoteEvent {
  std::uint64_t tick = 0;
  std::size_t track = 0;
  std::size_t sequence = 0;
  bool on = false;
  std::uint8_t channel = 0;
  std::uint8_t pitch = 0;
  std::uint8_t velocity = 0;
};

inline std::uint32_t read_be(std::span<const std::uint8_t> bytes, std::size_t pos, int n) {
  if (pos + static_cast<std::size_t>(n) > bytes.size()) {
    throw ParseError("truncated chunk header", pos);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v = (v << 8) | bytes[pos + i];
  return v;
}

struct TrackParse {
  std::vector<NoteEvent> notes;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> tempos;
  std::uint64_t end_tick = 0;
};

inline TrackParse parse_track(std::span<const std::uint8_t> bytes, std::size_t pos,
                              std::size_t end, std::size_t track) {
  TrackParse out;
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  std::size_t sequence = 0;
  while (pos < end) {
    tick += read_vlq(bytes, pos, end);
    if (pos >= end) throw ParseError("event missing after delta time", pos);
    const std::size_t event_at = pos;
    std::uint8_t status = bytes[pos];
    if (status & 0x80u) {
      ++pos;
    } else {
      if (running == 0) throw ParseError("data byte without running status", pos);
      status = running;
    }

    if (status == 0xFF) {
      running = 0;
      if (pos >= end) throw ParseError("truncated meta event", pos);
      const std::uint8_t type = bytes[pos++];
      const std::uint32_t len = read_vlq(bytes, pos, end);
      if (pos + len > end) throw ParseError("meta event runs past chunk end", event_at);
      if (type == 0x51) {
        if (len != 3) throw ParseError("tempo meta event must carry 3 bytes", event_at);
        const std::uint32_t us = (std::uint32_t{bytes[pos]} << 16) |
                                 (std::uint32_t{bytes[pos + 1]} << 8) | bytes[pos + 2];
        if (us == 0) throw ParseError("tempo of zero", event_at);
        out.tempos.emplace_back(tick, us);
      }
      pos += len;
      if (type == 0x2F) break;  // end of track
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      running = 0;
      const std::uint32_t len = read_vlq(bytes, pos, end);
      if (pos + len > end) throw ParseError("sysex event runs past chunk end", event_at);
      pos += len;
      continue;
    }
    if (status >= 0xF0) {
      throw ParseError("undecodable system message in track", event_at);
    }

    running = status;
    const std::uint8_t kind = status & 0xF0u;
    const std::size_t data_len = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
    if (pos + data_len > end) throw ParseError("channel message runs past chunk end", event_at);
    for (std::size_t i = 0; i < data_len; ++i) {
      if (bytes[pos + i] & 0x80u) throw ParseError("status byte inside channel data", pos + i);
    }
    if (kind == 0x80 || kind == 0x90) {
      NoteEvent e;
      e.tick = tick;
      e.track = track;
      e.sequence = sequence++;
      e.channel = status & 0x0Fu;
      e.pitch = bytes[pos];
      e.velocity = bytes[pos + 1];
      e.on = kind == 0x90 && e.velocity != 0;
      out.notes.push_back(e);
    }
    pos += data_len;
  }
  out.end_tick = tick;
  return out;
}

}  // namespace detail

struct SmfHeader {
  std::uint16_t format = 0;
  std::uint16_t tracks = 0;
  std::uint16_t division = 0;
};

// Notes sorted by onset then pitch. Overlapping notes on one (channel, pitch)
// pair first-on/first-off; notes never released end at the last event.
inline std::vector<MidiNote> parse_smf(std::span<const std::uint8_t> bytes,
                                       SmfHeader* header_out = nullptr) {
  if (bytes.size() < 14 || !std::equal(bytes.begin(), bytes.begin() + 4, "MThd")) {
    throw ParseError("missing MThd header", 0);
  }
  const std::uint32_t header_len = detail::read_be(bytes, 4, 4);
  if (header_len < 6) throw ParseError("MThd chunk shorter than 6 bytes", 4);
  SmfHeader header;
  header.format = static_cast<std::uint16_t>(detail::read_be(bytes, 8, 2));
  header.tracks = static_cast<std::uint16_t>(detail::read_be(bytes, 10, 2));
  header.division = static_cast<std::uint16_t>(detail::read_be(bytes, 12, 2));
  if (header.format > 1) throw ParseError("only SMF formats 0 and 1 are supported", 8);
  if (header_out) *header_out = header;

  std::vector<detail::NoteEvent> events;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> tempos;
  std::uint64_t last_tick = 0;
  std::size_t pos = 8 + header_len;
  std::size_t track = 0;
  while (track < header.tracks) {
    if (pos + 8 > bytes.size()) throw ParseError("truncated chunk", pos);
    const std::uint32_t len = detail::read_be(bytes, pos + 4, 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw ParseError("chunk length runs past end of file", pos);
    if (std::equal(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(pos) + 4, "MTrk")) {
      auto parsed = detail::parse_track(bytes, body, body + len, track);
      events.insert(events.end(), parsed.notes.begin(), parsed.notes.end());
      tempos.insert(tempos.end(), parsed.tempos.begin(), parsed.tempos.end());
      last_tick = std::max(last_tick, parsed.end_tick);
      ++track;
    }
    pos = body + len;  // unknown chunks are skipped
  }

  const TempoMap tempo_map(header.division, std::move(tempos));
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.track != b.track) return a.track < b.track;
    return a.sequence < b.sequence;
  });

  std::map<std::pair<int, int>, std::deque<std::pair<std::uint64_t, std::uint8_t>>> open;
  std::vector<MidiNote> notes;
  auto close = [&](std::uint64_t on_tick, std::uint8_t velocity, std::uint64_t off_tick,
                   std::uint8_t channel, std::uint8_t pitch) {
    notes.push_back({pitch, tempo_map.seconds_at(on_tick), tempo_map.seconds_at(off_tick),
                     velocity, channel});
  };
  for (const auto& e : events) {
    auto& queue = open[{e.channel, e.pitch}];
    if (e.on) {
      queue.emplace_back(e.tick, e.velocity);
    } else if (!queue.empty()) {
      close(queue.front().first, queue.front().second, e.tick, e.channel, e.pitch);
      queue.pop_front();
    }
  }
  for (auto& [key, queue] : open) {
    for (const auto& [tick, velocity] : queue) {
      close(tick, velocity, last_tick, static_cast<std::uint8_t>(key.first),
            static_cast<std::uint8_t>(key.second));
    }
  }
  std::sort(notes.begin(), notes.end(), [](const MidiNote& a, const MidiNote& b) {
    if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
    if (a.pitch != b.pitch) return a.pitch < b.pitch;
    if (a.channel != b.channel) return a.channel < b.channel;
    return a.release_s < b.release_s;
  });
  return notes;
}

inline std::vector<MidiNote> read_smf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return parse_smf(bytes);
}

// Onset of each note with pitch in [pitch_lo, pitch_lo + n_pitches) at
// step floor(onset / dt); onsets past the last step are dropped and repeated
// (note, step) pairs collapse.
inline NoteGrid onsets_to_grid(std::span<const MidiNote> notes, double dt, std::size_t n_steps,
                               int pitch_lo, std::size_t n_pitches) {
  if (!(dt > 0)) throw DomainError("grid step must be positive");
  std::vector<Event> onsets;
  for (const auto& note : notes) {
    const int alpha = static_cast<int>(note.pitch) - pitch_lo;
    if (alpha < 0 || static_cast<std::size_t>(alpha) >= n_pitches) continue;
    const double step = std::floor(note.onset_s / dt);
    if (step < 0 || step >= static_cast<double>(n_steps)) continue;
    onsets.push_back({static_cast<std::uint32_t>(alpha), static_cast<std::uint32_t>(step)});
  }
  std::sort(onsets.begin(), onsets.end());
  onsets.erase(std::unique(onsets.begin(), onsets.end()), onsets.end());
  return NoteGrid(n_pitches, n_steps, std::move(onsets));
}

}  // namespace spikecodec::midi
