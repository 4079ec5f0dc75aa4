#pragma once

// Glue between the toy model and the outside world: quality-controlled rate
// selection, frame-domain quality scores, a crude audio resynthesis from
// log-mel frames, and the held-out statistics used to judge a trained model.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "spikecodec/analysis.hpp"
#include "spikecodec/codec.hpp"
#include "spikecodec/error.hpp"
#include "spikecodec/synthdata.hpp"
#include "spikecodec/toynet.hpp"

namespace spikecodec {

// SI-SNR of two frame matrices, flattened column-major.
inline double frames_si_snr(const Frames& reference, const Frames& estimate) {
  if (reference.rows() != estimate.rows() || reference.cols() != estimate.cols()) {
    throw ShapeError("frame matrices differ in shape");
  }
  return si_snr({reference.data(), static_cast<std::size_t>(reference.size())},
                {estimate.data(), static_cast<std::size_t>(estimate.size())});
}

// Exact-mode bits of the cheapest format for z.
inline std::uint64_t best_exact_bits(const EventMatrix& z) {
  return cost_report(z.n_units(), z.n_steps(), z.event_count(), CostMode::Exact).best_bits();
}

struct MuTrial {
  int mu = 0;
  double si_snr_db = 0.0;
  std::uint64_t events = 0;
  std::uint64_t bits = 0;
};

struct MuSelection {
  int mu = 0;
  double si_snr_db = 0.0;
  std::uint64_t events = 0;
  std::uint64_t bits = 0;
  bool fallback = false;        // no mu met the floor; mu = 0 was used
  std::vector<MuTrial> trials;  // in scan order, 31 downwards
};

template <typename Real>
MuTrial try_mu(ToyAutoencoder<Real>& model, const Frames& frames, int mu) {
  const auto z = encode_to_matrix(model, frames, mu);
  const auto x_hat = decode_matrix(model, z, mu);
  return {mu, frames_si_snr(frames, x_hat), z.event_count(), best_exact_bits(z)};
}

// Largest mu whose reconstruction reaches `floor_db`; mu = 0 with the
// fallback flag when none does. Stops at the first hit.
template <typename Real>
MuSelection select_mu(ToyAutoencoder<Real>& model, const Frames& frames, double floor_db) {
  if (!model.config().use_mu) throw DomainError("mu selection needs a rate-conditioned model");
  if (!std::isfinite(floor_db)) throw DomainError("SI-SNR floor must be finite");
  MuSelection sel;
  for (int mu = kMuLevels - 1; mu >= 0; --mu) {
    sel.trials.push_back(try_mu(model, frames, mu));
    if (sel.trials.back().si_snr_db >= floor_db) break;
  }
  const MuTrial& chosen = sel.trials.back();
  sel.mu = chosen.mu;
  sel.si_snr_db = chosen.si_snr_db;
  sel.events = chosen.events;
  sel.bits = chosen.bits;
  sel.fallback = chosen.si_snr_db < floor_db;
  return sel;
}

// Listening aid only: each mel band becomes one sinusoid at its centre
// frequency, its amplitude following the band magnitude with linear
// interpolation between frame centres. Phase runs continuously per band.
inline Waveform resynthesize(const Frames& frames, const FeatureConfig& cfg = {}) {
  if (frames.rows() != static_cast<Eigen::Index>(cfg.n_bands)) {
    throw ShapeError("frames have " + std::to_string(frames.rows()) + " bands, expected " +
                     std::to_string(cfg.n_bands));
  }
  if (frames.cols() == 0) return {};
  if (!frames.allFinite()) throw NumericalError("non-finite feature frame");
  const auto steps = static_cast<std::size_t>(frames.cols());
  const std::size_t length = (steps - 1) * cfg.hop + cfg.window;
  const auto centers = mel_band_centers(cfg);
  // A windowed sinusoid of amplitude A peaks near A * sum(hann) / 2 = A * W / 4.
  const double to_amplitude = 4.0 / static_cast<double>(cfg.window);
  const double half = static_cast<double>(cfg.window) / 2.0;
  const double hop = static_cast<double>(cfg.hop);
  Waveform out(length, 0.0);
  for (std::size_t b = 0; b < cfg.n_bands; ++b) {
    const double step = 2.0 * std::numbers::pi * centers[b] / cfg.sample_rate;
    const auto row = frames.row(static_cast<Eigen::Index>(b));
    for (std::size_t n = 0; n < length; ++n) {
      const double pos = std::clamp((static_cast<double>(n) - half) / hop, 0.0,
                                    static_cast<double>(steps - 1));
      const auto lo = static_cast<Eigen::Index>(pos);
      const auto hi = std::min<Eigen::Index>(lo + 1, row.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      const double log_mag = (1.0 - frac) * row(lo) + frac * row(hi);
      const double amp = to_amplitude * std::max(0.0, std::expm1(log_mag));
      out[n] += amp * std::sin(step * static_cast<double>(n));
    }
  }
  return out;
}

// Frames of a WAV file at the feature sample rate.
inline Frames wav_frames(const WavData& wav, const FeatureConfig& cfg = {}) {
  if (wav.sample_rate != static_cast<std::uint32_t>(cfg.sample_rate)) {
    throw DomainError("WAV sample rate " + std::to_string(wav.sample_rate) + " Hz, expected " +
                      std::to_string(static_cast<std::uint32_t>(cfg.sample_rate)));
  }
  return features(wav.samples, cfg);
}

// ---------------------------------------------------------------------------
// Held-out statistics

inline std::vector<Frames> frames_of(std::span<const Clip> clips) {
  std::vector<Frames> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.frames);
  return out;
}

inline std::vector<NoteGrid> grids_of(std::span<const Clip> clips) {
  std::vector<NoteGrid> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(c.grid);
  return out;
}

// Per-band mean over every frame of the training set: the constant predictor.
inline Eigen::VectorXd band_means(std::span<const Frames> frames) {
  if (frames.empty()) throw DomainError("band means of an empty set");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(frames.front().rows());
  double count = 0.0;
  for (const auto& f : frames) {
    if (f.rows() != sum.size()) throw ShapeError("clips differ in band count");
    sum += f.rowwise().sum();
    count += static_cast<double>(f.cols());
  }
  return sum / count;
}

struct HeldOutReport {
  double mse = 0.0;           // mean over clips of per-entry squared error
  double baseline_mse = 0.0;  // same, for the constant predictor
  double density = 0.0;       // mean over clips
  double mean_events = 0.0;
  std::size_t cheaper_than_dense = 0;  // clips whose best sparse format beats dense
  std::vector<EventMatrix> z;
};

template <typename Real>
HeldOutReport held_out_report(ToyAutoencoder<Real>& model, std::span<const Clip> clips,
                              const Eigen::VectorXd& baseline, std::optional<int> mu = std::nullopt) {
  if (clips.empty()) throw DomainError("empty held-out set");
  HeldOutReport r;
  for (const auto& c : clips) {
    auto ev = evaluate(model, c.frames, mu);
    const auto entries = static_cast<double>(c.frames.size());
    r.mse += (ev.x_hat - c.frames).squaredNorm() / entries;
    r.baseline_mse += (c.frames.colwise() - baseline).squaredNorm() / entries;
    r.density += ev.z.density();
    r.mean_events += static_cast<double>(ev.z.event_count());
    const auto rep = cost_report(ev.z.n_units(), ev.z.n_steps(), ev.z.event_count(), CostMode::Exact);
    const auto sparse = std::min({rep.bits_coo, rep.bits_time, rep.bits_units});
    if (sparse < rep.bits_dense) ++r.cheaper_than_dense;
    r.z.push_back(std::move(ev.z));
  }
  const auto n = static_cast<double>(clips.size());
  r.mse /= n;
  r.baseline_mse /= n;
  r.density /= n;
  r.mean_events /= n;
  return r;
}

}  // namespace spikecodec
