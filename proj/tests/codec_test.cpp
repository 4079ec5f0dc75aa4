#include "spikecodec/codec.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>

#include "paper_matrix.hpp"

using namespace spikecodec;

namespace {

std::string bits_of(std::initializer_list<std::pair<unsigned, unsigned>> fields) {
  std::string s;
  for (auto [value, w] : fields) {
    for (unsigned k = w; k-- > 0;) s.push_back(((value >> k) & 1u) ? '1' : '0');
  }
  return s;
}

}  // namespace

TEST(Width, Convention) {
  EXPECT_EQ(width(0), 0u);
  EXPECT_EQ(width(1), 0u);
  EXPECT_EQ(width(2), 1u);
  EXPECT_EQ(width(5), 3u);
  EXPECT_EQ(width(8), 3u);
  EXPECT_EQ(width(9), 4u);
  EXPECT_EQ(width(10), 4u);
  EXPECT_EQ(width(1024), 10u);
}

TEST(CostFunctions, WorkedExample) {
  EXPECT_EQ(cost_dense(5, 10), 50u);
  EXPECT_EQ(cost_coo(5, 10, 7), 49u);
  EXPECT_EQ(cost_time(5, 10, 7, CostMode::Paper), 40u);
  EXPECT_EQ(cost_time(5, 10, 7, CostMode::Exact), 40u);
  EXPECT_EQ(cost_units(5, 10, 7, CostMode::Paper), 48u);
  EXPECT_EQ(cost_units(5, 10, 7, CostMode::Exact), 48u);
}

TEST(CostFunctions, SmallAndLargeCases) {
  EXPECT_EQ(cost_dense(1, 1), 1u);
  EXPECT_EQ(cost_dense(80, 1024), 81920u);
  EXPECT_EQ(cost_coo(5, 10, 0), 0u);
  EXPECT_EQ(cost_coo(80, 1024, 100), 1700u);
  EXPECT_EQ(cost_time(5, 10, 0), 0u);
  EXPECT_EQ(cost_units(2, 2, 0), 0u);
  EXPECT_THROW(cost_coo(2, 2, 5), DomainError);
  EXPECT_THROW(cost_dense(0, 2), DomainError);
}

TEST(CostFunctions, PaperVersusExactOffsets) {
  for (std::uint64_t n = 1; n <= 9; ++n) {
    for (std::uint64_t s = 0; s <= 200; ++s) {
      const std::uint64_t t = 256;
      const auto paper = cost_time(n, t, s, CostMode::Paper);
      const auto exact = cost_time(n, t, s, CostMode::Exact);
      if (width(s) == width(s + 1)) {
        EXPECT_EQ(paper, exact);
      }
      if (s >= 2 && (s & (s - 1)) == 0) {
        EXPECT_EQ(exact - paper, n - 1);
      }
    }
  }
}

TEST(CostReport, ArgMinAndTies) {
  const auto r = cost_report(5, 10, 7);
  EXPECT_EQ(r.best, StorageFormat::CompressedTime);
  EXPECT_EQ(r.best_bits(), 40u);
  // Brute-force comparison of the four formulas.
  const auto sparse = cost_report(80, 1024, 10);
  EXPECT_EQ(sparse.bits_coo, 170u);
  EXPECT_EQ(sparse.bits_time, 100u + 79u * 4u);
  EXPECT_EQ(sparse.best, StorageFormat::Coo);
  EXPECT_EQ(cost_report(80, 1024, 81920).best, StorageFormat::Dense);
  // S=0: all sparse formats cost 0, lowest tag wins.
  EXPECT_EQ(cost_report(4, 4, 0).best, StorageFormat::Coo);
  // N=T=1: every index is zero-width, so a sparse format costs nothing.
  EXPECT_EQ(cost_report(1, 1, 1).best, StorageFormat::Coo);
  // 2x2 with S=2: all four formats cost 4 bits, dense wins the tie.
  const auto tie = cost_report(2, 2, 2);
  EXPECT_EQ(tie.bits_coo, 4u);
  EXPECT_EQ(tie.bits_time, 4u);
  EXPECT_EQ(tie.bits_units, 4u);
  EXPECT_EQ(tie.best, StorageFormat::Dense);
}

TEST(CostReport, CsvRow) {
  std::ostringstream out;
  write_csv_row(out, cost_report(5, 10, 7));
  EXPECT_EQ(out.str(), "5,10,7,50,49,40,48,time\n");
}

TEST(Encode, CompressedTimeWorkedExample) {
  const auto m = testdata::worked_example();
  const auto payload = encode(m, StorageFormat::CompressedTime);
  EXPECT_EQ(payload.length_bits(), 40u);
  const std::string expected = bits_of({{3, 4}, {0, 4}, {4, 4}, {9, 4}, {1, 4}, {3, 4},
                                        {6, 4}, {1, 3}, {3, 3}, {4, 3}, {6, 3}});
  EXPECT_EQ(payload.to_string(), expected);
  EXPECT_EQ(decode(payload, 5, 10, 7, StorageFormat::CompressedTime), m);
}

TEST(Encode, CooWorkedExample) {
  const auto m = testdata::worked_example();
  const auto payload = encode(m, StorageFormat::Coo);
  EXPECT_EQ(payload.length_bits(), 49u);
  const std::string expected =
      bits_of({{0, 3}, {3, 4}, {1, 3}, {0, 4}, {1, 3}, {4, 4}, {2, 3}, {9, 4},
               {3, 3}, {1, 4}, {3, 3}, {3, 4}, {4, 3}, {6, 4}});
  EXPECT_EQ(payload.to_string(), expected);
}

TEST(Encode, CompressedUnitsWorkedExample) {
  const auto m = testdata::worked_example();
  const auto payload = encode(m, StorageFormat::CompressedUnits);
  EXPECT_EQ(payload.length_bits(), 48u);
  // Steps 0..9 hold units [1],[3],[],[0,3],[1],[],[4],[],[],[2].
  const std::string expected =
      bits_of({{1, 3}, {3, 3}, {0, 3}, {3, 3}, {1, 3}, {4, 3}, {2, 3},
               {1, 3}, {2, 3}, {2, 3}, {4, 3}, {5, 3}, {5, 3}, {6, 3}, {6, 3}, {6, 3}});
  EXPECT_EQ(payload.to_string(), expected);
}

TEST(Encode, DenseLayoutIsUnitMajor) {
  const auto m = testdata::worked_example();
  const auto payload = encode(m, StorageFormat::Dense);
  std::string expected;
  for (const auto& row : testdata::worked_example_rows())
    for (auto b : row) expected.push_back(b ? '1' : '0');
  EXPECT_EQ(payload.to_string(), expected);
}

TEST(Encode, EmptyMatrixSparsePayloadsAreEmpty) {
  const EventMatrix empty(5, 10);
  for (auto f : {StorageFormat::Coo, StorageFormat::CompressedTime,
                 StorageFormat::CompressedUnits}) {
    EXPECT_EQ(encode(empty, f).length_bits(), 0u) << format_name(f);
    EXPECT_EQ(decode(BitBuffer{}, 5, 10, 0, f), empty);
  }
}

// Payload length equals the exact cost and decoding inverts encoding, for
// every shape up to 6x6 and every event count.
TEST(Codec, ExhaustiveSmallShapes) {
  std::uint64_t seed = 1;
  for (std::uint64_t n = 1; n <= 6; ++n) {
    for (std::uint64_t t = 1; t <= 6; ++t) {
      for (std::uint64_t s = 0; s <= n * t; ++s) {
        for (int rep = 0; rep < 3; ++rep) {
          const auto m = random_matrix(seed++, n, t, s);
          for (auto f : kAllFormats) {
            const auto payload = encode(m, f);
            ASSERT_EQ(payload.length_bits(), cost(f, n, t, s))
                << n << "x" << t << " S=" << s << " " << format_name(f);
            ASSERT_EQ(decode(payload, n, t, s, f), m);
          }
        }
      }
    }
  }
}

TEST(Codec, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint64_t n = 1 + rng() % 40;
    const std::uint64_t t = 1 + rng() % 300;
    const std::uint64_t s = rng() % (n * t + 1);
    const auto m = random_matrix(rng(), n, t, s);
    for (auto f : kAllFormats) {
      const auto payload = encode(m, f);
      ASSERT_EQ(payload.length_bits(), cost(f, n, t, s));
      ASSERT_EQ(decode(payload, n, t, s, f), m);
    }
  }
}

TEST(Decode, CorruptOffsetRejected) {
  const auto m = testdata::worked_example();
  BitBuffer bad;
  for (unsigned v : {3u, 0u, 4u, 9u, 1u, 3u, 6u}) bad.write_bits(v, 4);
  for (unsigned v : {1u, 3u, 7u, 6u}) bad.write_bits(v, 3);  // 7 > 6 then 6: non-monotone
  EXPECT_THROW(decode(bad, 5, 10, 7, StorageFormat::CompressedTime), CorruptStream);

  // An offset larger than S.
  BitBuffer over;
  for (unsigned v : {3u, 0u, 4u, 9u, 1u, 3u, 6u}) over.write_bits(v, 4);
  for (unsigned v : {1u, 3u, 4u, 6u}) over.write_bits(v, 3);
  EXPECT_THROW(decode(over, 5, 10, 5, StorageFormat::CompressedTime), Error);
}

TEST(Decode, OutOfRangeAndDisorder) {
  BitBuffer step_too_big;  // 4-bit step 12 >= T=10
  step_too_big.write_bits(0, 3);
  step_too_big.write_bits(12, 4);
  EXPECT_THROW(decode(step_too_big, 5, 10, 1, StorageFormat::Coo), CorruptStream);

  BitBuffer unordered;
  unordered.write_bits(1, 3);
  unordered.write_bits(0, 4);
  unordered.write_bits(0, 3);
  unordered.write_bits(3, 4);
  EXPECT_THROW(decode(unordered, 5, 10, 2, StorageFormat::Coo), CorruptStream);

  BitBuffer repeated_time;  // unit 0 lists step 3 twice
  for (unsigned v : {3u, 3u}) repeated_time.write_bits(v, 4);
  for (unsigned v : {2u, 2u, 2u, 2u}) repeated_time.write_bits(v, 2);
  EXPECT_THROW(decode(repeated_time, 5, 10, 2, StorageFormat::CompressedTime),
               CorruptStream);
}

TEST(Decode, TruncatedAndTrailing) {
  const auto payload = encode(testdata::worked_example(), StorageFormat::CompressedTime);
  BitCursor short_cursor(payload.bytes(), 39);
  EXPECT_THROW(decode(short_cursor, 5, 10, 7, StorageFormat::CompressedTime),
               TruncatedStream);
  BitBuffer longer = payload;
  longer.write_bits(0, 1);
  EXPECT_THROW(decode(longer, 5, 10, 7, StorageFormat::CompressedTime), CorruptStream);
}

TEST(Stream, WorkedExampleLayout) {
  const std::vector<EventMatrix> samples = {testdata::worked_example()};
  const auto packed = pack_stream_detailed(samples, std::nullopt);
  ASSERT_EQ(packed.formats.size(), 1u);
  EXPECT_EQ(packed.formats[0], StorageFormat::CompressedTime);
  EXPECT_EQ(packed.header.s_max, 7u);
  // 21 header bytes, then tag(2) + S field width(8)=3 + 40 payload bits.
  const std::size_t bits = 8 * kStreamHeaderBytes + 2 + 3 + 40;
  EXPECT_EQ(packed.bytes.size(), (bits + 7) / 8);
  const std::vector<std::uint8_t> header = {'S', 'P', 'K', 'M', 1, 0, 0, 0, 5, 0, 0,
                                            0,   10,  0,   0,   0, 7, 0, 0, 0, 1};
  EXPECT_TRUE(std::equal(header.begin(), header.end(), packed.bytes.begin()));
  BitCursor cur(packed.bytes);
  (void)read_stream_header(cur);
  EXPECT_EQ(cur.read_bits(2), 0b10u);
  EXPECT_EQ(cur.read_bits(3), 7u);
  EXPECT_EQ(unpack_stream(packed.bytes), samples);
}

TEST(Stream, EmptyStreamIsHeaderOnly) {
  const auto bytes = pack_stream({});
  EXPECT_EQ(bytes.size(), kStreamHeaderBytes);
  EXPECT_TRUE(unpack_stream(bytes).empty());
}

TEST(Stream, DenseSamplesOmitCount) {
  const std::vector<EventMatrix> samples = {random_matrix(3, 4, 4, 10)};
  const auto bytes = pack_stream(samples, StorageFormat::Dense);
  EXPECT_EQ(bytes.size(), kStreamHeaderBytes + (2 + 16 + 7) / 8);
  EXPECT_EQ(unpack_stream(bytes), samples);
}

TEST(Stream, RandomSetsRoundTripAndAutoIsCheapest) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::uint64_t n = 1 + rng() % 20;
    const std::uint64_t t = 1 + rng() % 100;
    std::vector<EventMatrix> samples;
    const int count = static_cast<int>(rng() % 8);
    for (int k = 0; k < count; ++k) {
      samples.push_back(random_matrix(rng(), n, t, rng() % (n * t + 1)));
    }
    const auto packed = pack_stream_detailed(samples, std::nullopt);
    ASSERT_EQ(unpack_stream(packed.bytes), samples);
    for (auto f : kAllFormats) {
      const auto fixed = pack_stream(samples, f);
      ASSERT_EQ(unpack_stream(fixed), samples);
      for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto s = samples[k].event_count();
        EXPECT_LE(cost(packed.formats[k], n, t, s), cost(f, n, t, s));
      }
    }
  }
}

TEST(Stream, MixedShapesRejected) {
  const std::vector<EventMatrix> samples = {EventMatrix(2, 3), EventMatrix(3, 2)};
  EXPECT_THROW(pack_stream(samples), ShapeError);
}

TEST(Stream, HeaderValidation) {
  const std::vector<EventMatrix> samples = {testdata::worked_example()};
  auto bytes = pack_stream(samples);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(unpack_stream(bad_magic), CorruptStream);

  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(unpack_stream(bad_version), CorruptStream);

  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(unpack_stream(truncated), TruncatedStream);

  EXPECT_THROW(unpack_stream(std::vector<std::uint8_t>(10, 0)), TruncatedStream);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(unpack_stream(trailing), CorruptStream);
}
