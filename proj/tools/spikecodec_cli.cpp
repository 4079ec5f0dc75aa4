// spikecodec command-line front end. Every command stages its outputs in
// memory and only touches the filesystem once all work has succeeded, so a
// failing command leaves no partial files behind.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikecodec/analysis.hpp"
#include "spikecodec/codec.hpp"
#include "spikecodec/cost_model.hpp"
#include "spikecodec/event_matrix.hpp"
#include "spikecodec/midi.hpp"
#include "spikecodec/pipeline.hpp"
#include "spikecodec/synthdata.hpp"
#include "spikecodec/toynet.hpp"

namespace fs = std::filesystem;
using namespace spikecodec;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

// Files written only on commit(), each through a temporary sibling and a
// rename. Inputs are registered so an output can never overwrite one.
class Outputs {
public:
  void input(const std::string& path) { inputs_.push_back(path); }

  std::ostream& open(const std::string& path) {
    for (const auto& in : inputs_) {
      std::error_code ec;
      if (path == in || fs::equivalent(path, in, ec)) {
        throw DomainError("output " + path + " would overwrite an input");
      }
    }
    for (auto& [p, _] : staged_) {
      if (p == path) throw DomainError("output " + path + " named twice");
    }
    staged_.emplace_back(path, std::ostringstream{});
    auto& out = staged_.back().second;
    out << std::setprecision(9);
    return out;
  }

  void bytes(const std::string& path, const std::vector<std::uint8_t>& data) {
    open(path).write(reinterpret_cast<const char*>(data.data()),
                     static_cast<std::streamsize>(data.size()));
  }

  void commit() {
    std::vector<std::string> temps;
    try {
      for (auto& [path, body] : staged_) {
        const std::string tmp = path + ".partial";
        temps.push_back(tmp);
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        const auto text = body.str();
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        f.close();
        if (!f) throw Error("cannot write " + path);
      }
      auto tmp = temps.begin();
      for (const auto& staged : staged_) fs::rename(*tmp++, staged.first);
    } catch (...) {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
      throw;
    }
  }

private:
  std::vector<std::string> inputs_;
  std::list<std::pair<std::string, std::ostringstream>> staged_;  // stable references
};

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

EventMatrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_text(in);
}

// "out.txt" with k = 2 of 3 becomes "out.2.txt"; a single sample keeps the name.
std::string indexed_path(const std::string& path, std::size_t k, std::size_t count) {
  if (count == 1) return path;
  fs::path p(path);
  const auto ext = p.extension().string();
  p.replace_extension();
  return p.string() + "." + std::to_string(k) + ext;
}

FormatChoice parse_format_choice(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return parse_format(s);
}

// Fundamentals of a contiguous run of MIDI pitches, equal temperament.
NoteBank midi_bank(std::size_t k, int pitch_lo) {
  auto bank = NoteBank::toy_piano(k);
  for (std::size_t a = 0; a < k; ++a) {
    bank.notes[a].fundamental_hz = 440.0 * std::exp2((pitch_lo + static_cast<int>(a) - 69) / 12.0);
  }
  return bank;
}

std::optional<int> mu_arg(const ModelConfig& cfg, int mu) {
  if (!cfg.use_mu) {
    if (mu >= 0) throw DomainError("--mu given but the checkpoint has no rate conditioning");
    return std::nullopt;
  }
  if (mu < 0) throw DomainError("rate-conditioned checkpoint needs --mu");
  check_mu(mu);
  return mu;
}

// ---------------------------------------------------------------------------

struct CostArgs {
  std::optional<std::uint64_t> n, t, s;
  std::string matrix;
  std::string out;
};

int run_cost(const CostArgs& a) {
  std::uint64_t n = 0, t = 0, s = 0;
  Outputs outs;
  if (!a.matrix.empty()) {
    if (a.n || a.t || a.s) throw CLI::ValidationError("--matrix excludes --n/--t/--s");
    outs.input(a.matrix);
    const auto m = read_matrix_file(a.matrix);
    n = m.n_units();
    t = m.n_steps();
    s = m.event_count();
  } else {
    if (!a.n || !a.t || !a.s) throw CLI::ValidationError("need --n, --t and --s, or --matrix");
    n = *a.n;
    t = *a.t;
    s = *a.s;
  }
  std::ostringstream csv;
  csv << "mode," << kCostCsvHeader << '\n';
  csv << "paper,";
  write_csv_row(csv, cost_report(n, t, s, CostMode::Paper));
  csv << "exact,";
  write_csv_row(csv, cost_report(n, t, s, CostMode::Exact));
  std::cout << csv.str();
  if (!a.out.empty()) {
    outs.open(a.out) << csv.str();
    outs.commit();
  }
  return kOk;
}

struct SweepArgs {
  std::uint64_t n = 80, t = 1024;
  std::string out, svg;
  bool paper = false;
};

int run_sweep(const SweepArgs& a) {
  if (a.n == 0 || a.t == 0) throw DomainError("N and T must be positive");
  if (a.n * a.t > 100'000'000) throw DomainError("N*T too large to sweep every S");
  const auto table = regime_sweep(a.n, a.t);
  Outputs outs;
  write_regime_csv(outs.open(a.out), table, a.paper);
  if (!a.svg.empty()) write_regime_svg(outs.open(a.svg), table);
  outs.commit();
  for (const auto& r : regimes(table)) {
    std::cout << format_name(r.format) << ' ' << r.s_first << ' ' << r.s_last << '\n';
  }
  return kOk;
}

struct PackArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string format = "auto";
};

int run_pack(const PackArgs& a) {
  const auto choice = parse_format_choice(a.format);
  Outputs outs;
  std::vector<EventMatrix> samples;
  for (const auto& p : a.inputs) {
    outs.input(p);
    samples.push_back(read_matrix_file(p));
  }
  const auto packed = pack_stream_detailed(samples, choice);
  outs.bytes(a.out, packed.bytes);
  outs.commit();
  std::cout << "samples " << samples.size() << " bytes " << packed.bytes.size() << '\n';
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::cout << a.inputs[k] << ' ' << format_name(packed.formats[k]) << ' '
              << samples[k].event_count() << '\n';
  }
  return kOk;
}

struct UnpackArgs {
  std::string input, out;
};

int run_unpack(const UnpackArgs& a) {
  Outputs outs;
  outs.input(a.input);
  const auto bytes = read_bytes(a.input);
  const auto stream = unpack_stream_detailed(bytes);
  const auto count = stream.samples.size();
  for (std::size_t k = 0; k < count; ++k) {
    write_text(outs.open(indexed_path(a.out, k, count)), stream.samples[k]);
  }
  outs.commit();
  std::cout << "samples " << count << " N " << stream.header.n_units << " T "
            << stream.header.n_steps << '\n';
  return kOk;
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t k = 8, t = 256;
  double onset_rate = 0.015;
  std::string midi;
  int pitch_lo = 57;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  if (a.t == 0) throw DomainError("--t must be positive");
  RenderConfig rc;
  Outputs outs;
  NoteGrid grid;
  NoteBank bank;
  if (!a.midi.empty()) {
    outs.input(a.midi);
    const auto notes = midi::read_smf(a.midi);
    bank = midi_bank(a.k, a.pitch_lo);
    grid = midi::onsets_to_grid(notes, static_cast<double>(rc.hop) / rc.sample_rate, a.t,
                                a.pitch_lo, a.k);
  } else {
    bank = NoteBank::toy_piano(a.k);
    grid = sample_score(a.seed, a.k, a.t, a.onset_rate);
  }
  const auto wave = render(grid, bank, rc);
  outs.bytes(a.out + ".wav", encode_wav(wave, static_cast<std::uint32_t>(rc.sample_rate)));
  write_text(outs.open(a.out + ".grid.txt"), grid);
  outs.commit();
  std::cout << "onsets " << grid.event_count() << " samples " << wave.size() << '\n';
  return kOk;
}

// Dataset keys live in the same config file as the training keys.
struct DataArgs {
  std::size_t clips = 64;
  std::uint64_t seed = 7;
  double onset_rate = 0.015;
  std::size_t n_notes = 8;
};

void take_data_keys(KeyValues& kv, DataArgs& d) {
  auto pull = [&](const char* key, auto& field) {
    const auto it = kv.find(key);
    if (it == kv.end()) return;
    std::istringstream in(it->second);
    std::remove_reference_t<decltype(field)> v{};
    std::string rest;
    if (!(in >> v) || (in >> rest) || it->second.starts_with('-')) {
      throw DomainError(std::string("config key ") + key + ": bad value '" + it->second + "'");
    }
    field = v;
    kv.erase(it);
  };
  pull("clips", d.clips);
  pull("data_seed", d.seed);
  pull("onset_rate", d.onset_rate);
  pull("n_notes", d.n_notes);
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::map<std::string, std::string> overrides;  // flag name -> raw value
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  KeyValues kv;
  Outputs outs;
  if (!a.config.empty()) {
    outs.input(a.config);
    std::ifstream in(a.config);
    if (!in) throw Error("cannot open " + a.config);
    kv = parse_key_values(in);
  }
  for (const auto& [k, v] : a.overrides) kv[k] = v;  // flags win
  DataArgs data;
  take_data_keys(kv, data);
  const auto variant_it = kv.find("variant");
  if (variant_it == kv.end()) throw CLI::ValidationError("--variant is required");
  auto cfg = default_train_config(parse_variant(variant_it->second));
  apply_key_values(cfg, kv);
  cfg.validate();

  DatasetConfig dc;
  dc.seed = data.seed;
  dc.clips = data.clips;
  dc.n_notes = data.n_notes;
  dc.onset_rate = data.onset_rate;
  dc.n_steps = cfg.n_steps;
  dc.features.n_bands = cfg.n_features;
  if (dc.clips == 0) throw DomainError("clips must be positive");
  const auto clips = make_dataset(dc, NoteBank::toy_piano(dc.n_notes));
  const auto frames = frames_of(clips);

  const auto total = cfg.total_steps();
  auto result = train<float>(cfg, frames, [&](const MetricsRow& row) {
    if (!a.quiet && (row.step % 1000 == 0 || row.step + 1 == total)) {
      std::cerr << "step " << row.step << " loss_x " << row.loss_x << " loss_z " << row.loss_z
                << " gamma " << row.gamma << " density " << row.density << '\n';
    }
  });
  save_checkpoint(outs.open(a.out + ".spkn"), result.model);
  write_metrics_csv(outs.open(a.out + ".metrics.csv"), result.log);
  outs.commit();
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "variant " << variant_name(cfg.variant) << " steps " << total << " loss_x "
              << last.loss_x << " density " << last.density << '\n';
  }
  return kOk;
}

struct EncodeArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out;
  int mu = -1;
  std::string format = "auto";
};

int run_encode(const EncodeArgs& a) {
  const auto choice = parse_format_choice(a.format);
  Outputs outs;
  outs.input(a.checkpoint);
  auto model = load_checkpoint<float>(a.checkpoint);
  const auto mu = mu_arg(model.config(), a.mu);
  FeatureConfig fc;
  fc.n_bands = model.config().n_features;
  std::vector<EventMatrix> samples;
  for (const auto& p : a.inputs) {
    outs.input(p);
    samples.push_back(encode_to_matrix(model, wav_frames(read_wav(p), fc), mu));
  }
  const auto packed = pack_stream_detailed(samples, choice);
  outs.bytes(a.out, packed.bytes);
  outs.commit();
  for (std::size_t k = 0; k < samples.size(); ++k) {
    std::cout << a.inputs[k] << " events " << samples[k].event_count() << " format "
              << format_name(packed.formats[k]) << " bits " << best_exact_bits(samples[k]) << '\n';
  }
  return kOk;
}

struct DecodeArgs {
  std::string checkpoint, input, out;
  int mu = -1;
};

int run_decode(const DecodeArgs& a) {
  Outputs outs;
  outs.input(a.checkpoint);
  outs.input(a.input);
  auto model = load_checkpoint<float>(a.checkpoint);
  const auto mu = mu_arg(model.config(), a.mu);
  const auto stream = unpack_stream_detailed(read_bytes(a.input));
  FeatureConfig fc;
  fc.n_bands = model.config().n_features;
  const auto count = stream.samples.size();
  for (std::size_t k = 0; k < count; ++k) {
    const auto frames = decode_matrix(model, stream.samples[k], mu);
    outs.bytes(indexed_path(a.out, k, count),
               encode_wav(resynthesize(frames, fc), static_cast<std::uint32_t>(fc.sample_rate)));
  }
  outs.commit();
  std::cout << "samples " << count << '\n';
  return kOk;
}

struct AnalyzeArgs {
  std::string checkpoint, out;
  std::vector<std::string> wavs, grids;
  DataArgs data{32, 8, 0.015, 8};
  std::size_t steps = 256;
  std::size_t max_lag = 50, peak = 10, top_k = 15, anchor = 0;
  int mu = -1;
};

int run_analyze(const AnalyzeArgs& a) {
  Outputs outs;
  outs.input(a.checkpoint);
  auto model = load_checkpoint<float>(a.checkpoint);
  const auto mu = mu_arg(model.config(), a.mu);
  FeatureConfig fc;
  fc.n_bands = model.config().n_features;
  std::vector<EventMatrix> z, notes;
  if (!a.wavs.empty() || !a.grids.empty()) {
    if (a.wavs.size() != a.grids.size()) throw CLI::ValidationError("--wav and --grid counts differ");
    for (std::size_t k = 0; k < a.wavs.size(); ++k) {
      outs.input(a.wavs[k]);
      outs.input(a.grids[k]);
      z.push_back(encode_to_matrix(model, wav_frames(read_wav(a.wavs[k]), fc), mu));
      notes.push_back(read_matrix_file(a.grids[k]));
    }
  } else {
    DatasetConfig dc;
    dc.seed = a.data.seed;
    dc.clips = a.data.clips;
    dc.n_notes = a.data.n_notes;
    dc.onset_rate = a.data.onset_rate;
    dc.n_steps = a.steps;
    dc.features = fc;
    for (const auto& clip : make_dataset(dc, NoteBank::toy_piano(dc.n_notes))) {
      z.push_back(encode_to_matrix(model, clip.frames, mu));
      notes.push_back(clip.grid);
    }
  }
  const auto vol = cross_correlation(z, notes, a.max_lag);
  const auto phi = peak_prominence(vol, a.peak);
  const auto rows = selectivity_report(phi, a.top_k, a.anchor);
  write_correlation_csv(outs.open(a.out + ".correlation.csv"), vol);
  write_prominence_csv(outs.open(a.out + ".prominence.csv"), phi);
  write_selectivity_csv(outs.open(a.out + ".selectivity.csv"), rows, phi.n_notes);
  outs.commit();
  double density = 0.0;
  for (const auto& m : z) density += m.density();
  std::cout << std::setprecision(9) << "samples " << z.size() << " density "
            << density / static_cast<double>(z.size()) << " dispersion "
            << prominence_dispersion(phi) << '\n';
  return kOk;
}

struct MuSelectArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  double floor_db = 9.0;
  std::string out;
};

int run_mu_select(const MuSelectArgs& a) {
  Outputs outs;
  outs.input(a.checkpoint);
  auto model = load_checkpoint<float>(a.checkpoint);
  FeatureConfig fc;
  fc.n_bands = model.config().n_features;
  std::ostringstream csv;
  csv << std::setprecision(9) << "file,mu,si_snr_db,events,bits,fallback\n";
  for (const auto& p : a.inputs) {
    outs.input(p);
    const auto sel = select_mu(model, wav_frames(read_wav(p), fc), a.floor_db);
    if (sel.fallback) {
      std::cerr << "warning: " << p << ": no mu reaches " << a.floor_db << " dB, using mu=0\n";
    }
    csv << p << ',' << sel.mu << ',' << sel.si_snr_db << ',' << sel.events << ',' << sel.bits
        << ',' << (sel.fallback ? 1 : 0) << '\n';
  }
  std::cout << csv.str();
  if (!a.out.empty()) {
    outs.open(a.out) << csv.str();
    outs.commit();
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-matrix codec toolkit"};
  app.require_subcommand(1);
  int status = kOk;

  CostArgs cost;
  auto* c_cost = app.add_subcommand("cost", "Bit cost of every storage format");
  c_cost->add_option("--n", cost.n, "units");
  c_cost->add_option("--t", cost.t, "time steps");
  c_cost->add_option("--s", cost.s, "events");
  c_cost->add_option("--matrix", cost.matrix, "event matrix text file");
  c_cost->add_option("--out", cost.out, "also write the CSV here");
  c_cost->callback([&] { status = run_cost(cost); });

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "Costs for every S from 0 to N*T");
  c_sweep->add_option("--n", sweep.n, "units")->capture_default_str();
  c_sweep->add_option("--t", sweep.t, "time steps")->capture_default_str();
  c_sweep->add_option("--out", sweep.out, "CSV path")->required();
  c_sweep->add_option("--svg", sweep.svg, "SVG plot path");
  c_sweep->add_flag("--paper", sweep.paper, "add the published-formula columns");
  c_sweep->callback([&] { status = run_sweep(sweep); });

  PackArgs pack;
  auto* c_pack = app.add_subcommand("pack", "Pack event matrix text files into a stream");
  c_pack->add_option("inputs", pack.inputs, "matrix files")->required();
  c_pack->add_option("--out", pack.out, ".spkm path")->required();
  c_pack->add_option("--format", pack.format, "auto|dense|coo|time|units")->capture_default_str();
  c_pack->callback([&] { status = run_pack(pack); });

  UnpackArgs unpack;
  auto* c_unpack = app.add_subcommand("unpack", "Unpack a stream into matrix text files");
  c_unpack->add_option("input", unpack.input, ".spkm file")->required();
  c_unpack->add_option("--out", unpack.out, "text path (indexed when several samples)")->required();
  c_unpack->callback([&] { status = run_unpack(unpack); });

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a toy-piano clip and its onset grid");
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--k", synth.k, "notes")->capture_default_str();
  c_synth->add_option("--t", synth.t, "steps")->capture_default_str();
  c_synth->add_option("--onset-rate", synth.onset_rate)->capture_default_str();
  c_synth->add_option("--midi", synth.midi, "take onsets from a MIDI file instead");
  c_synth->add_option("--pitch-lo", synth.pitch_lo, "MIDI pitch of note 0")->capture_default_str();
  c_synth->add_option("--out", synth.out, "prefix for .wav and .grid.txt")->required();
  c_synth->callback([&] { status = run_synth(synth); });

  TrainArgs tr;
  std::map<std::string, std::string> tr_flags;
  std::vector<std::pair<std::string, CLI::Option*>> tr_opts;
  auto* c_train = app.add_subcommand("train", "Train a toy autoencoder on synthetic clips");
  c_train->add_option("--config", tr.config, "key=value file");
  c_train->add_option("--out", tr.out, "prefix for .spkn and .metrics.csv")->required();
  c_train->add_flag("--quiet", tr.quiet, "no progress on stderr");
  for (const char* key : {"variant", "b0", "gamma_inf", "phase1", "phase2", "phase3",
                          "learning_rate", "seed", "batch_size", "n_units", "n_steps", "hidden",
                          "mu_placement", "causal", "clips", "data_seed", "onset_rate",
                          "n_notes"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    tr_opts.emplace_back(key, c_train->add_option(flag, tr_flags[key],
                                                  std::string("override config key ") + key));
  }
  c_train->callback([&] {
    for (const auto& [key, opt] : tr_opts) {
      if (opt->count() > 0) tr.overrides[key] = tr_flags[key];
    }
    status = run_train(tr);
  });

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "WAV clips to an event stream");
  c_enc->add_option("--checkpoint", enc.checkpoint)->required();
  c_enc->add_option("inputs", enc.inputs, "WAV files")->required();
  c_enc->add_option("--out", enc.out, ".spkm path")->required();
  c_enc->add_option("--mu", enc.mu, "rate level for conditioned models");
  c_enc->add_option("--format", enc.format, "auto|dense|coo|time|units")->capture_default_str();
  c_enc->callback([&] { status = run_encode(enc); });

  DecodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Event stream to resynthesised WAV");
  c_dec->add_option("--checkpoint", dec.checkpoint)->required();
  c_dec->add_option("input", dec.input, ".spkm file")->required();
  c_dec->add_option("--out", dec.out, "WAV path (indexed when several samples)")->required();
  c_dec->add_option("--mu", dec.mu, "rate level for conditioned models");
  c_dec->callback([&] { status = run_decode(dec); });

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Unit-note correlation and prominence tables");
  c_an->add_option("--checkpoint", an.checkpoint)->required();
  c_an->add_option("--out", an.out, "prefix for the CSV files")->required();
  c_an->add_option("--wav", an.wavs, "clips (paired with --grid)");
  c_an->add_option("--grid", an.grids, "onset grids (paired with --wav)");
  c_an->add_option("--clips", an.data.clips, "synthetic clips when no --wav")->capture_default_str();
  c_an->add_option("--data-seed", an.data.seed)->capture_default_str();
  c_an->add_option("--n-notes", an.data.n_notes)->capture_default_str();
  c_an->add_option("--onset-rate", an.data.onset_rate)->capture_default_str();
  c_an->add_option("--steps", an.steps)->capture_default_str();
  c_an->add_option("--max-lag", an.max_lag)->capture_default_str();
  c_an->add_option("--peak", an.peak, "peak half-window")->capture_default_str();
  c_an->add_option("--top-k", an.top_k)->capture_default_str();
  c_an->add_option("--anchor", an.anchor, "anchor note")->capture_default_str();
  c_an->add_option("--mu", an.mu, "rate level for conditioned models");
  c_an->callback([&] { status = run_analyze(an); });

  MuSelectArgs ms;
  auto* c_ms = app.add_subcommand("mu-select", "Largest mu meeting an SI-SNR floor");
  c_ms->add_option("--checkpoint", ms.checkpoint)->required();
  c_ms->add_option("inputs", ms.inputs, "WAV files")->required();
  c_ms->add_option("--min-sisnr", ms.floor_db, "floor in dB")->capture_default_str();
  c_ms->add_option("--out", ms.out, "also write the CSV here");
  c_ms->callback([&] { status = run_mu_select(ms); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return status;
}
