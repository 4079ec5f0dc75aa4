#pragma once

// Analytic bit-cost comparisons: the vector-quantizer baseline, bitrate
// conversion, and the sweep over event counts showing which storage format
// is cheapest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spikecodec/codec.hpp"
#include "spikecodec/error.hpp"

namespace spikecodec {

// Q codebooks of K entries each, over t_z latent steps.
struct VqConfig {
  std::uint64_t q = 1;
  std::uint64_t k = 2;
  std::uint64_t t_z = 1;
};

inline std::uint64_t vq_cost(const VqConfig& cfg) {
  if (cfg.q == 0 || cfg.k == 0 || cfg.t_z == 0) {
    throw DomainError("VQ config needs q, k, t_z >= 1");
  }
  return cfg.q * cfg.t_z * width(cfg.k);
}

inline double bitrate(double bits, double duration_s) {
  if (!(duration_s > 0.0)) throw DomainError("duration must be positive");
  return bits / duration_s;
}

// Latent steps per second for an encoder downsampling audio by `hop`.
inline double steps_per_second(double sample_rate, double hop) {
  return sample_rate / hop;
}

struct RegimeRow {
  std::uint64_t s = 0;
  CostReport exact;
  CostReport paper;
};

struct RegimeTable {
  std::uint64_t n = 0;
  std::uint64_t t = 0;
  std::vector<RegimeRow> rows;
};

// Maximal run of consecutive rows sharing the same best format.
struct Regime {
  StorageFormat format = StorageFormat::Dense;
  std::uint64_t s_first = 0;
  std::uint64_t s_last = 0;
};

inline RegimeTable regime_sweep(std::uint64_t n, std::uint64_t t,
                                std::span<const std::uint64_t> s_values) {
  RegimeTable table{n, t, {}};
  table.rows.reserve(s_values.size());
  for (auto s : s_values) {
    table.rows.push_back({s, cost_report(n, t, s, CostMode::Exact),
                          cost_report(n, t, s, CostMode::Paper)});
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const RegimeRow& a, const RegimeRow& b) { return a.s < b.s; });
  return table;
}

// Every S from 0 to N*T.
inline RegimeTable regime_sweep(std::uint64_t n, std::uint64_t t) {
  std::vector<std::uint64_t> s_values(n * t + 1);
  for (std::uint64_t s = 0; s < s_values.size(); ++s) s_values[s] = s;
  return regime_sweep(n, t, s_values);
}

inline std::vector<Regime> regimes(const RegimeTable& table,
                                   CostMode mode = CostMode::Exact) {
  std::vector<Regime> out;
  for (const auto& row : table.rows) {
    const auto best = (mode == CostMode::Exact ? row.exact : row.paper).best;
    if (out.empty() || out.back().format != best) {
      out.push_back({best, row.s, row.s});
    } else {
      out.back().s_last = row.s;
    }
  }
  return out;
}

inline void write_regime_csv(std::ostream& out, const RegimeTable& table,
                             bool paper_overlay = false) {
  out << "S,bits_dense,bits_coo,bits_time,bits_units,best";
  if (paper_overlay) out << ",paper_bits_time,paper_bits_units,paper_best";
  out << '\n';
  for (const auto& row : table.rows) {
    const auto& r = row.exact;
    out << row.s << ',' << r.bits_dense << ',' << r.bits_coo << ','
        << r.bits_time << ',' << r.bits_units << ',' << format_name(r.best);
    if (paper_overlay) {
      out << ',' << row.paper.bits_time << ',' << row.paper.bits_units << ','
          << format_name(row.paper.best);
    }
    out << '\n';
  }
}

// Line plot of the four exact costs against S, with the best-format regimes
// shaded along the x axis.
inline void write_regime_svg(std::ostream& out, const RegimeTable& table) {
  constexpr double kWidth = 720;
  constexpr double kHeight = 440;
  constexpr double kLeft = 70;
  constexpr double kRight = 20;
  constexpr double kTop = 20;
  constexpr double kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::uint64_t s_max = 1;
  std::uint64_t y_max = 1;
  for (const auto& row : table.rows) {
    s_max = std::max(s_max, row.s);
    for (auto f : kAllFormats) y_max = std::max(y_max, row.exact.bits(f));
  }
  auto x_of = [&](double s) { return kLeft + plot_w * s / static_cast<double>(s_max); };
  auto y_of = [&](double b) {
    return kTop + plot_h * (1.0 - b / static_cast<double>(y_max));
  };
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& reg : regimes(table)) {
    const auto tag = static_cast<int>(reg.format);
    out << "<rect x=\"" << x_of(static_cast<double>(reg.s_first)) << "\" y=\""
        << kTop + plot_h << "\" width=\""
        << std::max(1.0, x_of(static_cast<double>(reg.s_last)) -
                             x_of(static_cast<double>(reg.s_first)))
        << "\" height=\"8\" fill=\"" << colors[tag] << "\"/>\n";
  }
  for (auto f : kAllFormats) {
    const auto tag = static_cast<int>(f);
    out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colors[tag]
        << "\" points=\"";
    // Subsample long sweeps to keep the file small.
    const std::size_t stride = std::max<std::size_t>(1, table.rows.size() / 2000);
    for (std::size_t k = 0; k < table.rows.size(); k += stride) {
      const auto& row = table.rows[k];
      out << x_of(static_cast<double>(row.s)) << ','
          << y_of(static_cast<double>(row.exact.bits(f))) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 16 + 16 * tag
        << "\" font-size=\"13\" fill=\"" << colors[tag] << "\">"
        << format_name(f) << "</text>\n";
  }
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" font-size=\"13\" text-anchor=\"middle\">events S (N=" << table.n
      << ", T=" << table.t << ", max " << s_max << ")</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" font-size=\"13\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\">bits (max " << y_max << ")</text>\n";
  out << "</svg>\n";
}

}  // namespace spikecodec
