#include "spikecodec/cost_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"

using namespace spikecodec;

TEST(VqCost, BaselineFigures) {
  EXPECT_EQ(vq_cost({8, 1024, 1}), 80u);
  EXPECT_EQ(vq_cost({1, 2, 1}), 1u);
  EXPECT_EQ(vq_cost({8, 1024, 256}), 20480u);
  EXPECT_THROW(vq_cost({0, 2, 1}), DomainError);
}

TEST(Bitrate, Conversion) {
  const double bps = bitrate(80.0 * steps_per_second(22050, 512), 1.0);
  EXPECT_NEAR(bps, 3445.3125, 1e-9);
  EXPECT_EQ(bitrate(0, 1.0), 0.0);
  EXPECT_NEAR(131072.0 / 22050.0, 5.944, 1e-3);
  EXPECT_THROW(bitrate(1, 0), DomainError);
}

TEST(RegimeSweep, DegenerateShape) {
  const auto table = regime_sweep(1, 1);
  ASSERT_EQ(table.rows.size(), 2u);
  const auto rs = regimes(table);
  // Zero-width indices make every sparse format free for a 1x1 matrix.
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0].format, StorageFormat::Coo);
}

TEST(RegimeSweep, FourRegimesMatchIntersectionOracle) {
  const std::uint64_t n = 80;
  const std::uint64_t t = 1024;
  const auto table = regime_sweep(n, t);
  ASSERT_EQ(table.rows.size(), n * t + 1);
  const auto rs = regimes(table);
  ASSERT_EQ(rs.size(), 4u);
  EXPECT_EQ(rs[0].format, StorageFormat::Coo);
  EXPECT_EQ(rs[1].format, StorageFormat::CompressedTime);
  EXPECT_EQ(rs[2].format, StorageFormat::CompressedUnits);
  EXPECT_EQ(rs[3].format, StorageFormat::Dense);
  EXPECT_EQ(rs[0].s_first, 0u);
  EXPECT_EQ(rs[3].s_last, n * t);

  const auto b = oracle::regime_boundaries(n, t);
  ASSERT_TRUE(b);
  EXPECT_EQ(rs[1].s_first, b->time_from);
  EXPECT_EQ(rs[2].s_first, b->units_from);
  EXPECT_EQ(rs[3].s_first, b->dense_from);
  // Frozen values from the oracle above.
  EXPECT_EQ(b->time_from, 80u);
  EXPECT_EQ(b->units_from, 3777u);
  EXPECT_EQ(b->dense_from, 9657u);
}

TEST(RegimeSweep, RowsAreConsistentWithCostReport) {
  const auto table = regime_sweep(12, 40);
  std::uint64_t prev_coo = 0;
  std::uint64_t prev_time = 0;
  for (const auto& row : table.rows) {
    EXPECT_EQ(row.exact, cost_report(12, 40, row.s));
    for (auto f : kAllFormats) {
      EXPECT_LE(row.exact.best_bits(), row.exact.bits(f));
      if (row.exact.bits(f) == row.exact.best_bits()) {
        EXPECT_GE(static_cast<int>(f), static_cast<int>(row.exact.best));
      }
    }
    EXPECT_GE(row.exact.bits_coo, prev_coo);
    EXPECT_GE(row.exact.bits_time, prev_time);
    EXPECT_EQ(row.exact.bits_dense, 480u);
    prev_coo = row.exact.bits_coo;
    prev_time = row.exact.bits_time;
  }
}

TEST(RegimeSweep, SubsetIsSorted) {
  const std::vector<std::uint64_t> s_values = {50, 3, 17, 0};
  const auto table = regime_sweep(10, 10, s_values);
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[0].s, 0u);
  EXPECT_EQ(table.rows[3].s, 50u);
}

TEST(RegimeSweep, CsvAndSvg) {
  const auto table = regime_sweep(1, 1);
  std::ostringstream csv;
  write_regime_csv(csv, table);
  EXPECT_EQ(csv.str(),
            "S,bits_dense,bits_coo,bits_time,bits_units,best\n"
            "0,1,0,0,0,coo\n"
            "1,1,0,0,0,coo\n");
  std::ostringstream svg;
  write_regime_svg(svg, regime_sweep(5, 10));
  EXPECT_NE(svg.str().find("<svg"), std::string::npos);
  EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}
