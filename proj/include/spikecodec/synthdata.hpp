#pragma once

// Toy piano: random onset scores, additive rendering of decaying harmonic
// stacks, log-mel feature frames, and 16-bit PCM WAV I/O. Every function is
// deterministic for a given seed.

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "spikecodec/error.hpp"
#include "spikecodec/event_matrix.hpp"

namespace spikecodec {

// Note onsets: units are notes, steps are latent frames.
using NoteGrid = EventMatrix;

using Waveform = std::vector<double>;

// F x T_z feature frames.
using Frames = Eigen::MatrixXd;

struct Note {
  double fundamental_hz = 440.0;
  std::vector<double> harmonics;  // amplitude of partial h+1
  double decay_per_s = 8.0;
};

struct NoteBank {
  std::vector<Note> notes;

  std::size_t size() const noexcept { return notes.size(); }

  // K notes spread over two octaves above `base_hz`, each with a slightly
  // different timbre and decay.
  static NoteBank toy_piano(std::size_t k = 8, double base_hz = 220.0) {
    if (k == 0) throw DomainError("note bank needs at least one note");
    NoteBank bank;
    for (std::size_t a = 0; a < k; ++a) {
      const double frac = k == 1 ? 0.0 : static_cast<double>(a) / static_cast<double>(k - 1);
      const double semitones = std::round(24.0 * frac);
      Note note;
      note.fundamental_hz = base_hz * std::exp2(semitones / 12.0);
      const double brightness = 0.35 + 0.3 * frac;
      for (int h = 0; h < 5; ++h) note.harmonics.push_back(std::pow(brightness, h));
      note.decay_per_s = 7.0 + 5.0 * frac;
      bank.notes.push_back(std::move(note));
    }
    return bank;
  }

  void validate(double sample_rate) const {
    if (notes.empty()) throw DomainError("note bank is empty");
    for (std::size_t a = 0; a < notes.size(); ++a) {
      if (!(notes[a].fundamental_hz > 0) || notes[a].fundamental_hz >= sample_rate / 2) {
        throw DomainError("note fundamental must lie in (0, Nyquist)");
      }
      for (std::size_t b = 0; b < a; ++b) {
        if (notes[a].fundamental_hz == notes[b].fundamental_hz) {
          throw DomainError("note fundamentals must be distinct");
        }
      }
    }
  }
};

struct RenderConfig {
  double sample_rate = 22050.0;
  std::size_t hop = 512;
  std::size_t window = 1024;
  double amplitude = 0.25;
  double attack_s = 0.002;
  double cutoff = 1e-5;  // envelope level after which a note is dropped
};

// Independent Bernoulli onset per (note, step).
inline NoteGrid sample_score(std::uint64_t seed, std::size_t k, std::size_t t,
                             double onset_rate) {
  if (!(onset_rate >= 0.0 && onset_rate <= 1.0)) {
    throw DomainError("onset rate must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Event> onsets;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t s = 0; s < t; ++s) {
      if (unit(rng) < onset_rate) {
        onsets.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(s)});
      }
    }
  }
  return NoteGrid(k, t, std::move(onsets));
}

inline std::size_t rendered_length(std::size_t n_steps, const RenderConfig& cfg) {
  return (n_steps - 1) * cfg.hop + cfg.window;
}

// Step t is struck at the centre of feature frame t's window, so frame t is
// the first frame that hears it.
inline std::size_t strike_sample(std::size_t step, const RenderConfig& cfg) {
  return step * cfg.hop + cfg.window / 2;
}

// Adds one note struck at sample `start` into `out`.
inline void add_note(Waveform& out, std::size_t start, const Note& note,
                     const RenderConfig& cfg) {
  const double sr = cfg.sample_rate;
  const double attack = std::max(1.0, cfg.attack_s * sr);
  const auto duration = static_cast<std::size_t>(
      std::ceil(-std::log(cfg.cutoff) / note.decay_per_s * sr));
  const std::size_t end = std::min(out.size(), start + duration);
  for (std::size_t n = start; n < end; ++n) {
    const double age = static_cast<double>(n - start);
    const double env = std::min(1.0, age / attack) * std::exp(-note.decay_per_s * age / sr);
    double v = 0.0;
    for (std::size_t h = 0; h < note.harmonics.size(); ++h) {
      const double f = note.fundamental_hz * static_cast<double>(h + 1);
      if (f >= sr / 2) break;  // aliasing partials dropped
      v += note.harmonics[h] * std::sin(2.0 * std::numbers::pi * f * age / sr);
    }
    out[n] += cfg.amplitude * env * v;
  }
}

inline Waveform render(const NoteGrid& grid, const NoteBank& bank,
                       const RenderConfig& cfg = {}) {
  if (grid.n_units() != bank.size()) {
    throw ShapeError("note grid has " + std::to_string(grid.n_units()) +
                     " notes but the bank has " + std::to_string(bank.size()));
  }
  bank.validate(cfg.sample_rate);
  Waveform out(rendered_length(grid.n_steps(), cfg), 0.0);
  for (const auto& e : grid.events()) {
    add_note(out, strike_sample(e.step, cfg), bank.notes[e.unit], cfg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features

struct FeatureConfig {
  double sample_rate = 22050.0;
  std::size_t window = 1024;
  std::size_t hop = 512;
  std::size_t n_bands = 64;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Center frequency of each mel band (0 Hz to Nyquist, triangular bands).
inline std::vector<double> mel_band_centers(const FeatureConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2);
  std::vector<double> centers(cfg.n_bands);
  for (std::size_t b = 0; b < cfg.n_bands; ++b) {
    centers[b] = mel_to_hz(top * static_cast<double>(b + 1) /
                           static_cast<double>(cfg.n_bands + 1));
  }
  return centers;
}

// n_bands x (window/2 + 1) triangular filters, each row summing to one so a
// band value is a weighted average of FFT magnitudes.
inline Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg) {
  const std::size_t bins = cfg.window / 2 + 1;
  const double top = hz_to_mel(cfg.sample_rate / 2);
  std::vector<double> edges(cfg.n_bands + 2);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    edges[j] = mel_to_hz(top * static_cast<double>(j) / static_cast<double>(cfg.n_bands + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.n_bands),
                                             static_cast<Eigen::Index>(bins));
  for (std::size_t b = 0; b < cfg.n_bands; ++b) {
    const double lo = edges[b];
    const double mid = edges[b + 1];
    const double hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.window);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = w;
    }
    const double sum = fb.row(static_cast<Eigen::Index>(b)).sum();
    if (sum > 0) {
      fb.row(static_cast<Eigen::Index>(b)) /= sum;
    } else {
      // Narrower than one bin: fall back to the nearest bin.
      const auto k = static_cast<Eigen::Index>(
          std::lround(mid * static_cast<double>(cfg.window) / cfg.sample_rate));
      fb(static_cast<Eigen::Index>(b), std::min<Eigen::Index>(k, static_cast<Eigen::Index>(bins) - 1)) = 1.0;
    }
  }
  return fb;
}

inline std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg) {
  if (n_samples < cfg.window) {
    throw DomainError("waveform of " + std::to_string(n_samples) +
                      " samples is shorter than one window (" +
                      std::to_string(cfg.window) + ")");
  }
  return (n_samples - cfg.window) / cfg.hop + 1;
}

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

// log(1 + mel-averaged STFT magnitude), F x T_z.
inline Frames features(const Waveform& wave, const FeatureConfig& cfg = {}) {
  const std::size_t frames = frame_count(wave.size(), cfg);
  const std::size_t bins = cfg.window / 2 + 1;
  const auto window = hann_window(cfg.window);
  const Eigen::MatrixXd fb = mel_filterbank(cfg);

  double* in = fftw_alloc_real(cfg.window);
  fftw_complex* spec = fftw_alloc_complex(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(cfg.window), in, spec, FFTW_ESTIMATE);

  Eigen::MatrixXd magnitude(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.window; ++i) in[i] = wave[start + i] * window[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) {
      magnitude(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) =
          std::hypot(spec[k][0], spec[k][1]);
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(spec);
  fftw_free(in);

  Frames out = fb * magnitude;
  return out.array().log1p().matrix();
}

// ---------------------------------------------------------------------------
// Datasets

struct Clip {
  NoteGrid grid;
  Waveform wave;
  Frames frames;
};

struct DatasetConfig {
  std::uint64_t seed = 1;
  std::size_t clips = 64;
  std::size_t n_notes = 8;
  std::size_t n_steps = 256;
  double onset_rate = 0.015;
  RenderConfig render;
  FeatureConfig features;
};

inline std::vector<Clip> make_dataset(const DatasetConfig& cfg,
                                      const NoteBank& bank) {
  std::vector<Clip> clips;
  clips.reserve(cfg.clips);
  std::mt19937_64 seeds(cfg.seed);
  for (std::size_t c = 0; c < cfg.clips; ++c) {
    Clip clip;
    clip.grid = sample_score(seeds(), cfg.n_notes, cfg.n_steps, cfg.onset_rate);
    clip.wave = render(clip.grid, bank, cfg.render);
    clip.frames = features(clip.wave, cfg.features);
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ---------------------------------------------------------------------------
// WAV (PCM 16-bit mono)

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_le(const std::vector<std::uint8_t>& in, std::size_t at, int bytes) {
  if (at + static_cast<std::size_t>(bytes) > in.size()) {
    throw ParseError("truncated WAV file", at);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_wav(const Waveform& wave, std::uint32_t sample_rate) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(2 * wave.size());
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_le(out, 36 + data_bytes, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_le(out, 16, 4);
  detail::put_le(out, 1, 2);  // PCM
  detail::put_le(out, 1, 2);  // mono
  detail::put_le(out, sample_rate, 4);
  detail::put_le(out, sample_rate * 2, 4);
  detail::put_le(out, 2, 2);
  detail::put_le(out, 16, 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_le(out, data_bytes, 4);
  for (double x : wave) {
    const double clipped = std::clamp(x, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
    detail::put_le(out, static_cast<std::uint16_t>(v), 2);
  }
  return out;
}

struct WavData {
  std::uint32_t sample_rate = 0;
  Waveform samples;
};

inline WavData decode_wav(const std::vector<std::uint8_t>& bytes) {
  auto tag_at = [&](std::size_t at, const char* tag) {
    return at + 4 <= bytes.size() && std::memcmp(bytes.data() + at, tag, 4) == 0;
  };
  if (!tag_at(0, "RIFF") || !tag_at(8, "WAVE")) throw ParseError("not a RIFF/WAVE file", 0);
  WavData wav;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t size = detail::get_le(bytes, at + 4, 4);
    const std::size_t body = at + 8;
    if (body + size > bytes.size()) throw ParseError("WAV chunk runs past end of file", at);
    if (tag_at(at, "fmt ")) {
      if (detail::get_le(bytes, body, 2) != 1 || detail::get_le(bytes, body + 2, 2) != 1 ||
          detail::get_le(bytes, body + 14, 2) != 16) {
        throw ParseError("only 16-bit PCM mono WAV is supported", body);
      }
      wav.sample_rate = detail::get_le(bytes, body + 4, 4);
      have_fmt = true;
    } else if (tag_at(at, "data")) {
      if (!have_fmt) throw ParseError("WAV data chunk before fmt chunk", at);
      wav.samples.resize(size / 2);
      for (std::size_t i = 0; i < wav.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(detail::get_le(bytes, body + 2 * i, 2));
        wav.samples[i] = static_cast<double>(v) / 32767.0;
      }
      return wav;
    }
    at = body + size + (size & 1);
  }
  throw ParseError("WAV file has no data chunk", at);
}

inline void write_wav(const std::string& path, const Waveform& wave, std::uint32_t sample_rate) {
  const auto bytes = encode_wav(wave, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

}  // namespace spikecodec
