#pragma once

// Reconstruction quality (SI-SNR) and spike/note synchrony analysis:
// lagged cross-correlation between unit events and note onsets, peak
// prominence around zero lag, and per-anchor selectivity tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spikecodec/error.hpp"
#include "spikecodec/event_matrix.hpp"

namespace spikecodec {

inline constexpr double kSiSnrEpsilon = 1e-12;
inline constexpr double kSiSnrCapDb = 100.0;

// Scale-invariant SNR in dB: both signals are mean-centred, the estimate is
// projected onto the reference, and the projection-to-residual energy ratio
// is reported, capped at +100 dB.
inline double si_snr(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size()) {
    throw ShapeError("SI-SNR inputs differ in length");
  }
  if (reference.empty()) throw DomainError("SI-SNR of empty signals");
  const auto n = static_cast<double>(reference.size());
  const double ref_mean = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  const double est_mean = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  double dot = 0.0;
  double ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference[i] - ref_mean;
    dot += (estimate[i] - est_mean) * r;
    ref_energy += r * r;
  }
  if (!(ref_energy > 0.0)) throw DomainError("SI-SNR reference has zero energy");
  const double scale = dot / ref_energy;
  double target_energy = 0.0;
  double error_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double target = scale * (reference[i] - ref_mean);
    const double error = (estimate[i] - est_mean) - target;
    target_energy += target * target;
    error_energy += error * error;
  }
  const double db = 10.0 * std::log10(target_energy / (error_energy + kSiSnrEpsilon));
  return std::min(db, kSiSnrCapDb);
}

// C[i][alpha][tau] for tau in [-W, W], averaged over samples.
struct CorrelationVolume {
  std::size_t n_units = 0;
  std::size_t n_notes = 0;
  std::size_t max_lag = 0;
  std::size_t samples = 0;
  std::vector<double> values;

  std::size_t lags() const noexcept { return 2 * max_lag + 1; }

  double at(std::size_t unit, std::size_t note, long lag) const {
    return values[index(unit, note, lag)];
  }
  double& at(std::size_t unit, std::size_t note, long lag) {
    return values[index(unit, note, lag)];
  }

  std::span<const double> curve(std::size_t unit, std::size_t note) const {
    return {values.data() + index(unit, note, -static_cast<long>(max_lag)), lags()};
  }

private:
  std::size_t index(std::size_t unit, std::size_t note, long lag) const {
    return (unit * n_notes + note) * lags() +
           static_cast<std::size_t>(lag + static_cast<long>(max_lag));
  }
};

// Sum over t of z_i(t) * n_alpha(t + tau); lags reaching outside the clip
// contribute nothing.
inline CorrelationVolume cross_correlation(std::span<const EventMatrix> z,
                                           std::span<const EventMatrix> notes,
                                           std::size_t max_lag) {
  if (z.size() != notes.size()) {
    throw ShapeError("event and note sample counts differ");
  }
  if (z.empty()) throw DomainError("cross-correlation needs at least one sample");
  CorrelationVolume vol;
  vol.n_units = z.front().n_units();
  vol.n_notes = notes.front().n_units();
  vol.max_lag = max_lag;
  vol.samples = z.size();
  const std::size_t lags = vol.lags();
  // Integer accumulation keeps the result independent of summation order.
  std::vector<std::uint64_t> counts(vol.n_units * vol.n_notes * lags, 0);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto& zs = z[k];
    const auto& ns = notes[k];
    if (zs.n_steps() != ns.n_steps()) {
      throw ShapeError("sample " + std::to_string(k) + ": event and note lengths differ");
    }
    if (zs.n_units() != vol.n_units || ns.n_units() != vol.n_notes) {
      throw ShapeError("sample " + std::to_string(k) + " changes unit or note count");
    }
    const auto t_len = static_cast<long>(ns.n_steps());
    std::vector<std::uint8_t> onset(vol.n_notes * ns.n_steps(), 0);
    for (const auto& e : ns.events()) onset[e.unit * ns.n_steps() + e.step] = 1;
    for (const auto& e : zs.events()) {
      for (long tau = -static_cast<long>(max_lag); tau <= static_cast<long>(max_lag); ++tau) {
        const long t = static_cast<long>(e.step) + tau;
        if (t < 0 || t >= t_len) continue;
        const std::size_t lag_index = static_cast<std::size_t>(tau + static_cast<long>(max_lag));
        for (std::size_t a = 0; a < vol.n_notes; ++a) {
          if (onset[a * ns.n_steps() + static_cast<std::size_t>(t)]) {
            ++counts[(e.unit * vol.n_notes + a) * lags + lag_index];
          }
        }
      }
    }
  }
  vol.values.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    vol.values[i] = static_cast<double>(counts[i]) / static_cast<double>(vol.samples);
  }
  return vol;
}

inline constexpr double kProminenceEpsilon = 1e-12;

struct ProminenceMatrix {
  std::size_t n_units = 0;
  std::size_t n_notes = 0;
  std::size_t peak_half_window = 10;
  std::vector<double> phi;

  double at(std::size_t unit, std::size_t note) const { return phi[unit * n_notes + note]; }
};

// Mean of C over the peak window |tau| < P minus the mean over the baseline
// P <= |tau| <= W, divided by the baseline standard deviation.
inline double prominence_of(std::span<const double> curve, std::size_t max_lag,
                            std::size_t peak_half_window) {
  double peak_sum = 0.0;
  std::size_t peak_n = 0;
  double base_sum = 0.0;
  double base_sq = 0.0;
  std::size_t base_n = 0;
  for (std::size_t j = 0; j < curve.size(); ++j) {
    const auto lag = static_cast<std::size_t>(
        std::abs(static_cast<long>(j) - static_cast<long>(max_lag)));
    if (lag < peak_half_window) {
      peak_sum += curve[j];
      ++peak_n;
    } else {
      base_sum += curve[j];
      base_sq += curve[j] * curve[j];
      ++base_n;
    }
  }
  const double peak_mean = peak_sum / static_cast<double>(peak_n);
  const double base_mean = base_sum / static_cast<double>(base_n);
  const double variance = std::max(0.0, base_sq / static_cast<double>(base_n) - base_mean * base_mean);
  return (peak_mean - base_mean) / (std::sqrt(variance) + kProminenceEpsilon);
}

inline ProminenceMatrix peak_prominence(const CorrelationVolume& vol,
                                        std::size_t peak_half_window = 10) {
  if (peak_half_window == 0 || peak_half_window > vol.max_lag) {
    throw DomainError("peak half-window must satisfy 1 <= P <= W");
  }
  ProminenceMatrix out{vol.n_units, vol.n_notes, peak_half_window, {}};
  out.phi.reserve(vol.n_units * vol.n_notes);
  for (std::size_t i = 0; i < vol.n_units; ++i) {
    for (std::size_t a = 0; a < vol.n_notes; ++a) {
      out.phi.push_back(prominence_of(vol.curve(i, a), vol.max_lag, peak_half_window));
    }
  }
  return out;
}

// Population standard deviation of all prominence entries.
inline double prominence_dispersion(const ProminenceMatrix& m) {
  const auto n = static_cast<double>(m.phi.size());
  const double mean = std::accumulate(m.phi.begin(), m.phi.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : m.phi) sq += (v - mean) * (v - mean);
  return std::sqrt(sq / n);
}

struct SelectivityRow {
  std::size_t unit = 0;
  std::vector<double> phi;  // one entry per note
};

// The `top_k` units most prominent for `anchor_note`, strongest first.
inline std::vector<SelectivityRow> selectivity_report(const ProminenceMatrix& m,
                                                      std::size_t top_k,
                                                      std::size_t anchor_note) {
  if (anchor_note >= m.n_notes) {
    throw DomainError("anchor note " + std::to_string(anchor_note) + " out of range");
  }
  std::vector<std::size_t> units(m.n_units);
  std::iota(units.begin(), units.end(), 0);
  std::stable_sort(units.begin(), units.end(), [&](std::size_t a, std::size_t b) {
    return m.at(a, anchor_note) > m.at(b, anchor_note);
  });
  units.resize(std::min(top_k, units.size()));
  std::vector<SelectivityRow> rows;
  for (auto u : units) {
    SelectivityRow row{u, {}};
    for (std::size_t a = 0; a < m.n_notes; ++a) row.phi.push_back(m.at(u, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_correlation_csv(std::ostream& out, const CorrelationVolume& vol) {
  out << "i,alpha,tau,C\n";
  const auto w = static_cast<long>(vol.max_lag);
  for (std::size_t i = 0; i < vol.n_units; ++i)
    for (std::size_t a = 0; a < vol.n_notes; ++a)
      for (long tau = -w; tau <= w; ++tau)
        out << i << ',' << a << ',' << tau << ',' << vol.at(i, a, tau) << '\n';
}

inline void write_prominence_csv(std::ostream& out, const ProminenceMatrix& m) {
  out << "i,alpha,phi\n";
  for (std::size_t i = 0; i < m.n_units; ++i)
    for (std::size_t a = 0; a < m.n_notes; ++a) out << i << ',' << a << ',' << m.at(i, a) << '\n';
}

inline void write_selectivity_csv(std::ostream& out, const std::vector<SelectivityRow>& rows,
                                  std::size_t n_notes) {
  out << "unit";
  for (std::size_t a = 0; a < n_notes; ++a) out << ",note_" << a;
  out << '\n';
  for (const auto& row : rows) {
    out << row.unit;
    for (double v : row.phi) out << ',' << v;
    out << '\n';
  }
}

}  // namespace spikecodec
