#include "spikecodec/midi.hpp"

#include <gtest/gtest.h>

#include <random>

#include "midi_corpus.hpp"

using namespace spikecodec;
using namespace spikecodec::midi;

TEST(Vlq, Decoding) {
  const std::vector<std::uint8_t> two = {0x81, 0x48};
  EXPECT_EQ(decode_vlq(two), 200u);
  EXPECT_EQ(decode_vlq(std::vector<std::uint8_t>{0x00}), 0u);
  EXPECT_EQ(decode_vlq(std::vector<std::uint8_t>{0x7F}), 127u);
  EXPECT_EQ(decode_vlq(std::vector<std::uint8_t>{0xFF, 0xFF, 0xFF, 0x7F}), 0x0FFFFFFFu);
  EXPECT_THROW(decode_vlq(std::vector<std::uint8_t>{0x81}), ParseError);
  EXPECT_THROW(decode_vlq(std::vector<std::uint8_t>{0x81, 0x81, 0x81, 0x81, 0x01}), ParseError);
}

TEST(Vlq, WriterRoundTrip) {
  for (std::uint32_t v : {0u, 1u, 127u, 128u, 200u, 16383u, 16384u, 0x0FFFFFFFu}) {
    testdata::Bytes b;
    testdata::append_vlq(b, v);
    EXPECT_EQ(decode_vlq(b), v);
  }
}

TEST(Smf, HandCraftedCorpus) {
  for (const auto& file : testdata::midi_corpus()) {
    const auto notes = parse_smf(file.bytes);
    ASSERT_EQ(notes.size(), file.expected.size()) << file.name;
    for (std::size_t i = 0; i < notes.size(); ++i) {
      EXPECT_EQ(notes[i].pitch, file.expected[i].pitch) << file.name;
      EXPECT_EQ(notes[i].velocity, file.expected[i].velocity) << file.name;
      EXPECT_EQ(notes[i].channel, file.expected[i].channel) << file.name;
      EXPECT_NEAR(notes[i].onset_s, file.expected[i].onset_s, 1e-12) << file.name;
      EXPECT_NEAR(notes[i].release_s, file.expected[i].release_s, 1e-12) << file.name;
    }
  }
}

TEST(Smf, HeaderFields) {
  SmfHeader h;
  parse_smf(testdata::midi_corpus()[3].bytes, &h);
  EXPECT_EQ(h.format, 1);
  EXPECT_EQ(h.tracks, 3);
  EXPECT_EQ(h.division, 240);
}

TEST(Smf, Errors) {
  auto good = testdata::midi_corpus()[0].bytes;

  auto bad_magic = good;
  bad_magic[1] = 'X';
  EXPECT_THROW(parse_smf(bad_magic), ParseError);

  auto truncated = good;
  truncated.resize(truncated.size() - 5);
  try {
    parse_smf(truncated);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 14u);  // the MTrk chunk header
  }

  // Data byte at the start of a track with no running status.
  const auto orphan = testdata::concat(
      {testdata::header_chunk(0, 1, 96), testdata::track_chunk({0x00, 0x3C, 0x40})});
  try {
    parse_smf(orphan);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 23u);
  }

  // Running status is cancelled by a meta event.
  const auto cancelled = testdata::concat(
      {testdata::header_chunk(0, 1, 96),
       testdata::track_chunk({0x00, 0x90, 60, 10, 0x00, 0xFF, 0x01, 0x00, 0x00, 60, 0})});
  EXPECT_THROW(parse_smf(cancelled), ParseError);

  // Meta event longer than its chunk.
  const auto overrun = testdata::concat(
      {testdata::header_chunk(0, 1, 96), testdata::track_chunk({0x00, 0xFF, 0x01, 0x09, 'a'})});
  EXPECT_THROW(parse_smf(overrun), ParseError);

  // Format 2 unsupported.
  const auto fmt2 = testdata::concat(
      {testdata::header_chunk(2, 1, 96), testdata::track_chunk({0x00, 0xFF, 0x2F, 0x00})});
  EXPECT_THROW(parse_smf(fmt2), ParseError);

  // System real-time byte inside a track.
  const auto realtime = testdata::concat(
      {testdata::header_chunk(0, 1, 96), testdata::track_chunk({0x00, 0xF8})});
  EXPECT_THROW(parse_smf(realtime), ParseError);
}

TEST(Smf, SmpteDivision) {
  // -25 fps, 40 ticks per frame: 1000 ticks per second.
  const std::uint16_t division = static_cast<std::uint16_t>((0xE7 << 8) | 40);
  const auto bytes = testdata::concat(
      {testdata::header_chunk(0, 1, division),
       testdata::track_chunk({0x00, 0x90, 50, 1, 0x87, 0x68, 0x80, 50, 0})});  // 1000 ticks
  const auto notes = parse_smf(bytes);
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_NEAR(notes[0].release_s, 1.0, 1e-12);
}

TEST(Smf, WriterRoundTrip) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<testdata::TickNote> notes;
    for (int k = 0; k < 12; ++k) {
      const std::uint32_t on = rng() % 5000;
      // Distinct pitches per note keep first-on/first-off pairing unambiguous.
      notes.push_back({static_cast<std::uint8_t>(30 + 3 * k), on, static_cast<std::uint32_t>(on + 1 + rng() % 900),
                       static_cast<std::uint8_t>(1 + rng() % 127)});
    }
    const std::uint16_t tpq = 192;
    const std::uint32_t tempo = 400000;
    const auto parsed = parse_smf(testdata::write_smf(notes, tpq, tempo));
    ASSERT_EQ(parsed.size(), notes.size());
    const double spt = tempo / 1e6 / tpq;
    for (const auto& n : notes) {
      const auto it = std::find_if(parsed.begin(), parsed.end(),
                                   [&](const MidiNote& p) { return p.pitch == n.pitch; });
      ASSERT_NE(it, parsed.end());
      EXPECT_NEAR(it->onset_s, n.on * spt, 1e-9);
      EXPECT_NEAR(it->release_s, n.off * spt, 1e-9);
      EXPECT_EQ(it->velocity, n.velocity);
      EXPECT_LE(it->onset_s, it->release_s);
    }
  }
}

TEST(OnsetsToGrid, HopGridStep) {
  const double dt = 512.0 / 22050.0;
  const std::vector<MidiNote> one = {{60, 1.0, 1.5, 80, 0}};
  const auto grid = onsets_to_grid(one, dt, 256, 60, 8);
  ASSERT_EQ(grid.event_count(), 1u);
  EXPECT_EQ(grid.events()[0], (Event{0, 43}));
}

TEST(OnsetsToGrid, EmptyRangeAndCollapse) {
  EXPECT_EQ(onsets_to_grid({}, 0.1, 10, 60, 4).event_count(), 0u);
  const std::vector<MidiNote> notes = {{61, 0.21, 0.3, 1, 0},
                                       {61, 0.25, 0.4, 1, 0},   // same bin
                                       {59, 0.5, 0.6, 1, 0},    // below range
                                       {62, 5.0, 5.1, 1, 0}};   // past the end
  const auto grid = onsets_to_grid(notes, 0.1, 10, 60, 4);
  ASSERT_EQ(grid.event_count(), 1u);
  EXPECT_EQ(grid.events()[0], (Event{1, 2}));
  EXPECT_LE(grid.event_count(), notes.size());
  EXPECT_THROW(onsets_to_grid(notes, 0.0, 10, 60, 4), DomainError);
}
