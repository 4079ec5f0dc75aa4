#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "spikecodec/codec.hpp"
#include "spikecodec/event_matrix.hpp"

namespace oracle {

using namespace spikecodec;

// O(N K T W) nested-loop reference on dense rows.
inline std::vector<double> brute_force_correlation(const std::vector<EventMatrix>& z,
                                            const std::vector<EventMatrix>& n, long w) {
  const std::size_t units = z[0].n_units();
  const std::size_t notes = n[0].n_units();
  std::vector<double> out(units * notes * static_cast<std::size_t>(2 * w + 1), 0.0);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto zd = z[k].to_dense();
    const auto nd = n[k].to_dense();
    const long t_len = static_cast<long>(z[k].n_steps());
    for (std::size_t i = 0; i < units; ++i)
      for (std::size_t a = 0; a < notes; ++a)
        for (long tau = -w; tau <= w; ++tau)
          for (long t = 0; t < t_len; ++t) {
            const long u = t + tau;
            if (u < 0 || u >= t_len) continue;
            out[(i * notes + a) * static_cast<std::size_t>(2 * w + 1) +
                static_cast<std::size_t>(tau + w)] +=
                zd[i][static_cast<std::size_t>(t)] * nd[a][static_cast<std::size_t>(u)];
          }
  }
  for (auto& v : out) v /= static_cast<double>(z.size());
  return out;
}

// Independent boundary oracle. Within each segment where width(S + 1) is a
// constant w, every cost is affine in S, so the first S at which format
// `b` becomes strictly cheaper than format `a` is found by integer
// arithmetic on the two lines instead of scanning.
struct Line {
  long double slope;
  long double intercept;
};

inline Line line_for(StorageFormat f, std::uint64_t n, std::uint64_t t, unsigned w) {
  const auto wn = static_cast<long double>(width(n));
  const auto wt = static_cast<long double>(width(t));
  switch (f) {
    case StorageFormat::Dense: return {0, static_cast<long double>(n * t)};
    case StorageFormat::Coo: return {wn + wt, 0};
    case StorageFormat::CompressedTime: return {wt, static_cast<long double>(n - 1) * w};
    case StorageFormat::CompressedUnits: return {wn, static_cast<long double>(t - 1) * w};
  }
  return {0, 0};
}

// Smallest S in [lo, hi] with cost_b(S) < cost_a(S), or none.
inline std::optional<std::uint64_t> first_cheaper(StorageFormat a, StorageFormat b,
                                           std::uint64_t n, std::uint64_t t,
                                           std::uint64_t lo, std::uint64_t hi) {
  for (unsigned w = 0; w <= 64; ++w) {
    // width(S + 1) == w  <=>  S in [seg_lo, seg_hi]
    const std::uint64_t seg_lo = w == 0 ? 0 : (w == 1 ? 1 : (std::uint64_t{1} << (w - 1)));
    const std::uint64_t seg_hi = w == 0 ? 0 : (std::uint64_t{1} << w) - 1;
    const std::uint64_t from = std::max(lo, seg_lo);
    const std::uint64_t to = std::min(hi, seg_hi);
    if (from > to) continue;
    const Line la = line_for(a, n, t, w);
    const Line lb = line_for(b, n, t, w);
    // (lb.slope - la.slope) * S < la.intercept - lb.intercept
    const long double ds = lb.slope - la.slope;
    const long double di = la.intercept - lb.intercept;
    std::optional<long double> cand;
    if (ds == 0) {
      if (di > 0) cand = static_cast<long double>(from);
    } else if (ds < 0) {
      // S > di / ds
      const long double x = std::floor(di / ds) + 1;
      cand = std::max<long double>(x, static_cast<long double>(from));
    } else {
      // S < di / ds: holds at the start of the segment if at all.
      if (static_cast<long double>(from) * ds < di) cand = static_cast<long double>(from);
    }
    if (cand && *cand <= static_cast<long double>(to)) {
      return static_cast<std::uint64_t>(*cand);
    }
  }
  return std::nullopt;
}

struct Boundaries {
  std::uint64_t time_from = 0;   // first S where CompressedTime beats Coo
  std::uint64_t units_from = 0;  // first S where CompressedUnits beats CompressedTime
  std::uint64_t dense_from = 0;  // first S where CompressedUnits is no longer below Dense
};

// Dense wins ties (lowest tag), so its boundary is the first S at which
// units(S) >= n * t, solved per constant-width segment.
inline std::optional<Boundaries> regime_boundaries(std::uint64_t n, std::uint64_t t) {
  const auto b1 = first_cheaper(StorageFormat::Coo, StorageFormat::CompressedTime, n, t, 1, n * t);
  if (!b1) return std::nullopt;
  const auto b2 =
      first_cheaper(StorageFormat::CompressedTime, StorageFormat::CompressedUnits, n, t, *b1, n * t);
  if (!b2) return std::nullopt;
  const auto wn = static_cast<long double>(width(n));
  for (unsigned w = 0; w <= 40; ++w) {
    const auto lo = std::max<std::uint64_t>(*b2, w <= 1 ? w : std::uint64_t{1} << (w - 1));
    const auto hi = std::min<std::uint64_t>(n * t, (std::uint64_t{1} << w) - 1);
    if (lo > hi) continue;
    const long double x =
        std::ceil((static_cast<long double>(n * t) - static_cast<long double>(t - 1) * w) / wn);
    const auto cand = std::max<long double>(x, static_cast<long double>(lo));
    if (cand <= static_cast<long double>(hi)) {
      return Boundaries{*b1, *b2, static_cast<std::uint64_t>(cand)};
    }
  }
  return std::nullopt;
}

}  // namespace oracle
