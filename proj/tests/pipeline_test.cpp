#include "spikecodec/pipeline.hpp"

#include <gtest/gtest.h>

using namespace spikecodec;

namespace {

ToyAutoencoder<double> small_mu_model() {
  ModelConfig cfg;
  cfg.n_features = 64;
  cfg.hidden = 8;
  cfg.n_units = 6;
  cfg.use_mu = true;
  return ToyAutoencoder<double>(cfg, 3);
}

Frames small_clip() {
  DatasetConfig dc;
  dc.clips = 1;
  dc.n_steps = 24;
  dc.onset_rate = 0.1;
  return make_dataset(dc, NoteBank::toy_piano(dc.n_notes)).front().frames;
}

}  // namespace

TEST(FramesSiSnr, IdentityAndShape) {
  const Frames f = Frames::Random(4, 5);
  EXPECT_DOUBLE_EQ(frames_si_snr(f, f), kSiSnrCapDb);
  EXPECT_THROW(frames_si_snr(f, Frames::Zero(4, 6)), ShapeError);
}

TEST(SelectMu, LowFloorStopsAtTop) {
  auto model = small_mu_model();
  const auto sel = select_mu(model, small_clip(), -1000.0);
  EXPECT_EQ(sel.mu, kMuLevels - 1);
  EXPECT_FALSE(sel.fallback);
  EXPECT_EQ(sel.trials.size(), 1u);
}

TEST(SelectMu, UnreachableFloorFallsBackToZero) {
  auto model = small_mu_model();
  const auto sel = select_mu(model, small_clip(), 1000.0);
  EXPECT_EQ(sel.mu, 0);
  EXPECT_TRUE(sel.fallback);
  ASSERT_EQ(sel.trials.size(), static_cast<std::size_t>(kMuLevels));
  EXPECT_EQ(sel.trials.back().mu, 0);
}

// Brute force: every mu scored independently, the largest passing one wins.
TEST(SelectMu, MatchesBruteForce) {
  auto model = small_mu_model();
  const auto clip = small_clip();
  std::vector<double> score(kMuLevels);
  for (int mu = 0; mu < kMuLevels; ++mu) score[mu] = try_mu(model, clip, mu).si_snr_db;
  std::vector<double> sorted = score;
  std::sort(sorted.begin(), sorted.end());
  for (double floor : {sorted[0], sorted[10], sorted[20], sorted[31]}) {
    int expected = 0;
    for (int mu = kMuLevels - 1; mu >= 0; --mu) {
      if (score[mu] >= floor) {
        expected = mu;
        break;
      }
    }
    const auto sel = select_mu(model, clip, floor);
    EXPECT_EQ(sel.mu, expected) << floor;
    EXPECT_DOUBLE_EQ(sel.si_snr_db, score[expected]);
  }
}

TEST(SelectMu, RejectsUnconditionedModel) {
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.n_units = 4;
  ToyAutoencoder<double> model(cfg, 1);
  EXPECT_THROW(select_mu(model, small_clip(), 9.0), DomainError);
}

TEST(Resynthesize, SilenceAndShape) {
  FeatureConfig cfg;
  const auto wave = resynthesize(Frames::Zero(64, 10), cfg);
  EXPECT_EQ(wave.size(), 9 * cfg.hop + cfg.window);
  for (double x : wave) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(resynthesize(Frames::Zero(3, 10), cfg), ShapeError);
}

// A tone analysed, resynthesised and analysed again keeps its loudest band.
TEST(Resynthesize, ToneKeepsItsBand) {
  FeatureConfig cfg;
  const auto centers = mel_band_centers(cfg);
  const std::size_t band = 30;
  Waveform tone(8192);
  for (std::size_t n = 0; n < tone.size(); ++n) {
    tone[n] = 0.3 * std::sin(2 * std::numbers::pi * centers[band] * static_cast<double>(n) /
                             cfg.sample_rate);
  }
  const auto f = features(tone, cfg);
  const auto again = features(resynthesize(f, cfg), cfg);
  Eigen::Index arg = 0;
  again.col(again.cols() / 2).maxCoeff(&arg);
  EXPECT_EQ(static_cast<std::size_t>(arg), band);
}

TEST(WavFrames, RejectsWrongRate) {
  WavData wav{16000, Waveform(4096, 0.0)};
  EXPECT_THROW(wav_frames(wav), DomainError);
  wav.sample_rate = 22050;
  EXPECT_EQ(wav_frames(wav).cols(), 7);
}

TEST(HeldOut, BandMeansAndBaseline) {
  const std::vector<Frames> fr = {Frames::Constant(2, 3, 1.0), Frames::Constant(2, 1, 5.0)};
  const auto m = band_means(fr);
  EXPECT_DOUBLE_EQ(m(0), 2.0);
  EXPECT_DOUBLE_EQ(m(1), 2.0);
}

TEST(HeldOut, ReportCountsCheaperClips) {
  ModelConfig cfg;
  cfg.hidden = 8;
  cfg.n_units = 4;
  ToyAutoencoder<double> model(cfg, 2);
  DatasetConfig dc;
  dc.clips = 3;
  dc.n_steps = 16;
  const auto clips = make_dataset(dc, NoteBank::toy_piano(dc.n_notes));
  const auto r = held_out_report(model, std::span<const Clip>(clips),
                                 band_means(frames_of(clips)));
  ASSERT_EQ(r.z.size(), 3u);
  std::size_t cheaper = 0;
  for (const auto& z : r.z) {
    const auto rep = cost_report(z.n_units(), z.n_steps(), z.event_count());
    cheaper += std::min({rep.bits_coo, rep.bits_time, rep.bits_units}) < rep.bits_dense;
  }
  EXPECT_EQ(r.cheaper_than_dense, cheaper);
  EXPECT_GT(r.baseline_mse, 0.0);
}
