#pragma once

// Binary N x T event matrix stored as a canonical (unit, step)-sorted event
// list, plus the plain-text interchange format used by tests and the CLI.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spikecodec/error.hpp"

namespace spikecodec {

struct Event {
  std::uint32_t unit = 0;
  std::uint32_t step = 0;

  friend auto operator<=>(const Event&, const Event&) = default;
};

using BitRow = std::vector<std::uint8_t>;

class EventMatrix {
public:
  EventMatrix() = default;

  EventMatrix(std::uint64_t n_units, std::uint64_t n_steps)
      : n_units_(n_units), n_steps_(n_steps) {
    check_shape(n_units, n_steps);
  }

  // Events may arrive in any order; they are sorted into canonical order.
  EventMatrix(std::uint64_t n_units, std::uint64_t n_steps,
              std::vector<Event> events)
      : EventMatrix(n_units, n_steps) {
    // One pass: bounds, and whether the input is already strictly increasing.
    bool canonical = true;
    for (std::size_t k = 0; k < events.size(); ++k) {
      const auto& e = events[k];
      if (e.unit >= n_units || e.step >= n_steps) [[unlikely]] {
        throw DomainError("event (" + std::to_string(e.unit) + "," +
                          std::to_string(e.step) + ") outside " +
                          std::to_string(n_units) + "x" +
                          std::to_string(n_steps));
      }
      canonical = canonical && (k == 0 || events[k - 1] < e);
    }
    if (!canonical) {
      std::sort(events.begin(), events.end());
      if (std::adjacent_find(events.begin(), events.end()) != events.end()) {
        throw DomainError("duplicate event in event list");
      }
    }
    events_ = std::move(events);
  }

  static EventMatrix from_dense(const std::vector<BitRow>& rows) {
    if (rows.empty() || rows.front().empty()) {
      throw ShapeError("dense matrix must have at least one row and column");
    }
    const std::size_t n_steps = rows.front().size();
    EventMatrix m(rows.size(), n_steps);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != n_steps) {
        throw ShapeError("ragged dense matrix: row " + std::to_string(i) +
                         " has " + std::to_string(rows[i].size()) +
                         " columns, expected " + std::to_string(n_steps));
      }
      for (std::size_t t = 0; t < n_steps; ++t) {
        if (rows[i][t] > 1) throw DomainError("dense entries must be 0 or 1");
        if (rows[i][t] != 0) {
          m.events_.push_back({static_cast<std::uint32_t>(i),
                               static_cast<std::uint32_t>(t)});
        }
      }
    }
    return m;
  }

  std::vector<BitRow> to_dense() const {
    std::vector<BitRow> rows(n_units_, BitRow(n_steps_, 0));
    for (const auto& e : events_) rows[e.unit][e.step] = 1;
    return rows;
  }

  std::uint64_t n_units() const noexcept { return n_units_; }
  std::uint64_t n_steps() const noexcept { return n_steps_; }
  std::uint64_t event_count() const noexcept { return events_.size(); }
  const std::vector<Event>& events() const noexcept { return events_; }

  double density() const noexcept {
    return static_cast<double>(events_.size()) /
           (static_cast<double>(n_units_) * static_cast<double>(n_steps_));
  }

  bool contains(std::uint32_t unit, std::uint32_t step) const {
    return std::binary_search(events_.begin(), events_.end(), Event{unit, step});
  }

  friend bool operator==(const EventMatrix&, const EventMatrix&) = default;

private:
  static void check_shape(std::uint64_t n_units, std::uint64_t n_steps) {
    constexpr std::uint64_t limit = std::uint64_t{1} << 32;
    if (n_units == 0 || n_steps == 0) {
      throw ShapeError("event matrix needs N >= 1 and T >= 1");
    }
    if (n_units >= limit || n_steps >= limit) {
      throw ShapeError("event matrix dimensions must be below 2^32");
    }
  }

  std::uint64_t n_units_ = 1;
  std::uint64_t n_steps_ = 1;
  std::vector<Event> events_;
};

// S distinct events drawn uniformly without replacement; same seed, same matrix.
inline EventMatrix random_matrix(std::uint64_t seed, std::uint64_t n_units,
                                 std::uint64_t n_steps, std::uint64_t count) {
  EventMatrix shape(n_units, n_steps);
  const std::uint64_t cells = n_units * n_steps;
  if (count > cells) {
    throw DomainError("cannot place " + std::to_string(count) +
                      " events in " + std::to_string(cells) + " cells");
  }
  std::mt19937_64 rng(seed);
  // Floyd's sampling; draws the complement when more than half is occupied.
  const bool complement = count > cells / 2;
  const std::uint64_t draws = complement ? cells - count : count;
  std::vector<std::uint64_t> chosen;
  chosen.reserve(draws);
  if (cells <= (std::uint64_t{1} << 26)) {
    std::vector<std::uint64_t> taken((cells + 63) / 64, 0);
    auto is_taken = [&](std::uint64_t c) { return (taken[c >> 6] >> (c & 63)) & 1u; };
    for (std::uint64_t j = cells - draws; j < cells; ++j) {
      std::uniform_int_distribution<std::uint64_t> pick(0, j);
      std::uint64_t c = pick(rng);
      if (is_taken(c)) c = j;
      taken[c >> 6] |= std::uint64_t{1} << (c & 63);
    }
    std::vector<Event> events;
    events.reserve(count);
    for (std::uint64_t w = 0; w < taken.size(); ++w) {
      std::uint64_t word = complement ? ~taken[w] : taken[w];
      if (w + 1 == taken.size() && cells % 64 != 0) word &= (std::uint64_t{1} << (cells % 64)) - 1;
      while (word != 0) {
        const std::uint64_t c = 64 * w + static_cast<unsigned>(std::countr_zero(word));
        word &= word - 1;
        events.push_back({static_cast<std::uint32_t>(c / n_steps),
                          static_cast<std::uint32_t>(c % n_steps)});
      }
    }
    return EventMatrix(n_units, n_steps, std::move(events));
  }
  if (complement) {
    throw DomainError("dense random matrices limited to 2^26 cells");
  }
  std::unordered_set<std::uint64_t> taken;
  for (std::uint64_t j = cells - draws; j < cells; ++j) {
    std::uniform_int_distribution<std::uint64_t> pick(0, j);
    std::uint64_t c = pick(rng);
    if (!taken.insert(c).second) {
      c = j;
      taken.insert(c);
    }
    chosen.push_back(c);
  }
  std::vector<Event> events;
  events.reserve(count);
  for (auto c : chosen) {
    events.push_back({static_cast<std::uint32_t>(c / n_steps),
                      static_cast<std::uint32_t>(c % n_steps)});
  }
  return EventMatrix(n_units, n_steps, std::move(events));
}

// Text interchange: first line "N T", then one "i t" pair per line in
// canonical order.
inline void write_text(std::ostream& out, const EventMatrix& m) {
  out << m.n_units() << ' ' << m.n_steps() << '\n';
  for (const auto& e : m.events()) out << e.unit << ' ' << e.step << '\n';
}

inline std::string to_text(const EventMatrix& m) {
  std::ostringstream out;
  write_text(out, m);
  return out.str();
}

inline EventMatrix read_text(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::string& dst) {
    while (std::getline(in, dst)) {
      ++line_no;
      if (dst.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line(line)) throw ParseError("empty event matrix text", 0);
  std::uint64_t n = 0;
  std::uint64_t t = 0;
  {
    std::istringstream header(line);
    if (!(header >> n >> t)) {
      throw ParseError("expected \"N T\" on line " + std::to_string(line_no), 0);
    }
  }
  std::vector<Event> events;
  while (next_line(line)) {
    std::istringstream row(line);
    std::uint64_t i = 0;
    std::uint64_t s = 0;
    std::string extra;
    if (!(row >> i >> s) || (row >> extra)) {
      throw ParseError("expected \"i t\" on line " + std::to_string(line_no), 0);
    }
    if (i >= n || s >= t) {
      throw DomainError("event on line " + std::to_string(line_no) +
                        " outside the declared shape");
    }
    events.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(s)});
  }
  return EventMatrix(n, t, std::move(events));
}

inline EventMatrix from_text(const std::string& text) {
  std::istringstream in(text);
  return read_text(in);
}

}  // namespace spikecodec
