#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "neurosteer/dataio.hpp"
#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer {
namespace {

namespace fs = std::filesystem;
using data::Split;

data::SynthConfig small(double duration_s = 20.0) {
  data::SynthConfig c;
  c.n_subjects = 1;
  c.n_trials = 2;
  c.duration_s = duration_s;
  c.eeg_channels = 4;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("neurosteer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double max_mix_residual(const data::PairedSample& s) {
  double m = 0.0;
  for (size_t i = 0; i < s.mixture.size(); ++i) {
    m = std::max(m, std::abs(s.mixture.samples[i] - s.target.samples[i] - s.interferer.samples[i]));
  }
  return m;
}

TEST(Synth, ShapesAndMixtureInvariant) {
  auto d = data::synth_cocktail(small(), 1);
  ASSERT_EQ(d.size(), 2u);
  for (const auto& s : d) {
    EXPECT_EQ(s.mixture.size(), 160000u);
    EXPECT_EQ(s.eeg.num_channels(), 4);
    EXPECT_EQ(s.eeg.num_samples(), 2666);  // floor(20 s * 8000 / 60)
    EXPECT_LT(max_mix_residual(s), 1e-6);
    EXPECT_TRUE(s.attended_label == 0 || s.attended_label == 1);
  }
}

TEST(Synth, DeterministicPerSeed) {
  auto a = data::synth_cocktail(small(5.0), 7), b = data::synth_cocktail(small(5.0), 7),
       c = data::synth_cocktail(small(5.0), 8);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mixture.samples, b[i].mixture.samples);
    EXPECT_EQ(a[i].eeg.channels, b[i].eeg.channels);
  }
  EXPECT_NE(a[0].mixture.samples, c[0].mixture.samples);
}

TEST(Synth, InvalidConfigs) {
  auto c = small();
  c.duration_s = 0.0;
  EXPECT_THROW(data::synth_cocktail(c, 1), ConfigError);
  c = small();
  c.eeg_channels = 0;
  EXPECT_THROW(data::synth_cocktail(c, 1), ConfigError);
  c = small();
  c.attn_gain = 1.5;
  EXPECT_THROW(data::synth_cocktail(c, 1), ConfigError);
}

TEST(Synth, ConfigJsonRoundTrip) {
  auto c = small();
  c.attn_gain = 0.25;
  EXPECT_EQ(data::SynthConfig::from_json(c.to_json()).to_json(), c.to_json());
}

// Mean over channels of |corr(EEG channel, envelope)|, difference attended minus unattended.
double envelope_corr_gap(const data::PairedSample& s) {
  const auto frames = static_cast<size_t>(s.eeg.num_samples());
  auto att = dsp::frame_envelope(s.target.view(), 60.0, frames);
  auto un = dsp::frame_envelope(s.interferer.view(), 60.0, frames);
  double gap = 0.0;
  for (Eigen::Index c = 0; c < s.eeg.num_channels(); ++c) {
    std::span<const double> row(s.eeg.channels.row(c).data(), frames);
    gap += std::abs(dsp::pearson(row, att)) - std::abs(dsp::pearson(row, un));
  }
  return gap / static_cast<double>(s.eeg.num_channels());
}

double mean_gap(double attn_gain) {
  data::SynthConfig c;
  c.n_subjects = 2;
  c.n_trials = 4;
  c.duration_s = 40.0;
  c.eeg_channels = 8;
  c.attn_gain = attn_gain;
  auto d = data::synth_cocktail(c, 11);
  auto m = data::make_splits(d, {}, 11);
  std::mt19937_64 rng(12);
  double acc = 0.0;
  for (int i = 0; i < 200; ++i) {
    acc += envelope_corr_gap(data::sample_training_window(d, m, Split::kTrain, 5.0, {-10, 10}, rng));
  }
  return acc / 200.0;
}

TEST(Synth, NoAttentionInformationAtZeroGain) { EXPECT_LT(std::abs(mean_gap(0.0)), 0.02); }

TEST(Synth, AttendedEnvelopeDominatesAtFullGain) { EXPECT_GT(mean_gap(1.0), 0.1); }

TEST(Splits, RatioArithmeticPerTrial) {
  data::SynthConfig c;
  c.n_subjects = 1;
  c.n_trials = 8;
  c.duration_s = 60.0;
  c.eeg_channels = 2;
  auto d = data::synth_cocktail(c, 3);
  auto m = data::make_splits(d, {}, 3);
  ASSERT_EQ(m.train.size(), 8u);
  ASSERT_EQ(m.validation.size(), 8u);
  ASSERT_EQ(m.test.size(), 8u);
  for (size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(m.train[i].duration_s, 45.0, 0.01);
    EXPECT_NEAR(m.validation[i].duration_s, 7.5, 0.01);
    EXPECT_NEAR(m.test[i].duration_s, 7.5, 0.01);
  }
}

TEST(Splits, DisjointAndCovering) {
  auto d = data::synth_cocktail(small(30.0), 4);
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto m = data::make_splits(d, {}, seed);
    std::vector<data::Region> all;
    for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
      for (const auto& r : m.regions(s)) all.push_back(r);
    }
    for (size_t i = 0; i < all.size(); ++i) {
      for (size_t j = i + 1; j < all.size(); ++j) {
        if (all[i].stimulus_key != all[j].stimulus_key) continue;
        const bool overlap = all[i].start_frame < all[j].start_frame + all[j].frames &&
                             all[j].start_frame < all[i].start_frame + all[i].frames;
        EXPECT_FALSE(overlap) << "seed " << seed;
      }
    }
    for (const auto& s : d) {
      Eigen::Index covered = 0;
      for (const auto& r : all) {
        if (r.subject == s.subject_id && r.trial == s.trial_id) covered += r.frames;
      }
      EXPECT_EQ(covered, s.eeg.num_samples());
    }
  }
}

TEST(Splits, DeterministicAndSerializable) {
  auto d = data::synth_cocktail(small(10.0), 5);
  auto a = data::make_splits(d, {}, 9), b = data::make_splits(d, {}, 9);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(data::SplitManifest::from_json(a.to_json()).to_json(), a.to_json());
}

TEST(Splits, TooShortTrialIsNamed) {
  auto d = data::synth_cocktail(small(4.0), 6);
  try {
    data::make_splits(d, {}, 1);
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("subject 0 trial 0"), std::string::npos) << e.what();
  }
}

TEST(Windows, AugmentedMixturesHitTheDrawnSnr) {
  auto d = data::synth_cocktail(small(), 7);
  auto m = data::make_splits(d, {}, 7);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    auto w = data::sample_training_window(d, m, Split::kTrain, 2.0, {-10, 10}, rng);
    // round(2 s * 133.3 Hz) frames of 60 samples each.
    EXPECT_EQ(w.eeg.num_samples(), 267);
    EXPECT_EQ(w.mixture.size(), 267u * 60u);
    EXPECT_LT(max_mix_residual(w), 1e-6);
    const double snr = 10.0 * std::log10(signals::mean_power(w.target.view()) /
                                         signals::mean_power(w.interferer.view()));
    EXPECT_GE(snr, -10.0 - 1e-9);
    EXPECT_LE(snr, 10.0 + 1e-9);
  }
  const auto& r = m.train.front();
  auto fixed = data::crop(d, r, 10, 133, 3.7);
  const double snr = 10.0 * std::log10(signals::mean_power(fixed.target.view()) /
                                       signals::mean_power(fixed.interferer.view()));
  EXPECT_NEAR(snr, 3.7, 1e-9);
}

TEST(Windows, WindowStaysInsideItsRegion) {
  auto d = data::synth_cocktail(small(), 8);
  auto m = data::make_splits(d, {}, 8);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    auto w = data::sample_training_window(d, m, Split::kTest, 1.0, {0, 0}, rng);
    bool inside = false;
    for (const auto& r : m.test) {
      if (r.subject == w.subject_id && r.trial == w.trial_id && w.window.start_s >= r.start_s - 1e-9 &&
          w.window.start_s + w.window.duration_s <= r.start_s + r.duration_s + 1e-9) {
        inside = true;
      }
    }
    EXPECT_TRUE(inside) << w.window.start_s;
  }
  EXPECT_THROW(data::sample_training_window(d, m, Split::kTest, 5.0, {0, 0}, rng), DataError);
}

TEST(Windows, TilingIsNonOverlapping) {
  auto d = data::synth_cocktail(small(), 9);
  auto m = data::make_splits(d, {}, 9);
  auto tiles = data::tile_windows(m, Split::kTrain, {1.0});
  ASSERT_FALSE(tiles.empty());
  for (size_t i = 1; i < tiles.size(); ++i) {
    if (tiles[i].region == tiles[i - 1].region) {
      EXPECT_GE(tiles[i].offset, tiles[i - 1].offset + tiles[i - 1].frames);
    }
  }
  EXPECT_EQ(data::tile_windows(m, Split::kTrain, {1.0}, 2).size(), 2 * m.train.size());
}

TEST(Eegb, RoundTripAndMalformed) {
  auto dir = scratch("eegb");
  data::EegSignal e;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  e.channels.resize(3, 17);
  for (Eigen::Index i = 0; i < e.channels.size(); ++i) e.channels.data()[i] = n(rng);
  e.rate = 128.0;
  data::write_eegb(dir / "a.eegb", e);
  auto back = data::read_eegb(dir / "a.eegb");
  EXPECT_EQ(back.rate, 128.0);
  EXPECT_LT((back.channels - e.channels).cwiseAbs().maxCoeff(), 1e-6);
  {
    std::ofstream bad(dir / "bad.eegb", std::ios::binary);
    bad << "EEGXnonsense";
  }
  EXPECT_THROW(data::read_eegb(dir / "bad.eegb"), DataError);
  // Truncate a valid file: header and payload disagree.
  fs::resize_file(dir / "a.eegb", fs::file_size(dir / "a.eegb") - 8);
  EXPECT_THROW(data::read_eegb(dir / "a.eegb"), DataError);
  fs::remove_all(dir);
}

TEST(Ingest, RoundTripThroughInterchangeFiles) {
  auto dir = scratch("ingest");
  auto d = data::synth_cocktail(small(3.0), 10);
  data::write_dataset(dir, d);
  auto r = data::ingest_interchange(dir / "manifest.jsonl");
  EXPECT_TRUE(r.rejected.empty());
  ASSERT_EQ(r.dataset.size(), d.size());
  for (size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(r.dataset[i].attended_label, d[i].attended_label);
    EXPECT_EQ(r.dataset[i].eeg.num_samples(), d[i].eeg.num_samples());
    EXPECT_LT(max_mix_residual(r.dataset[i]), 1e-6);
    double err = 0.0;
    for (size_t k = 0; k < d[i].target.size(); ++k) {
      err = std::max(err, std::abs(r.dataset[i].target.samples[k] - d[i].target.samples[k]));
    }
    EXPECT_LT(err, 1e-6);
  }
  fs::remove_all(dir);
}

TEST(Ingest, DecimatesIntegerFactorAndRejectsMismatches) {
  auto dir = scratch("ingest_bad");
  auto d = data::synth_cocktail(small(3.0), 11);
  data::write_dataset(dir, d);
  auto entries = data::read_manifest(dir / "manifest.jsonl");

  // EEG at 4x the processing rate decimates back to 400 frames.
  data::EegSignal fast;
  fast.rate = 4.0 * data::kDefaultEegRate;
  fast.channels = data::EegMatrix::Zero(4, 1600);
  data::write_eegb(dir / "fast.eegb", fast);
  // EEG two seconds short of its audio.
  data::EegSignal short_eeg;
  short_eeg.channels = data::EegMatrix::Zero(4, 133);
  data::write_eegb(dir / "short.eegb", short_eeg);

  auto e1 = entries[0];
  e1.eeg = "fast.eegb";
  auto e2 = entries[0];
  e2.eeg = "short.eegb";
  data::write_manifest(dir / "manifest.jsonl", {e1, e2});
  auto r = data::ingest_interchange(dir / "manifest.jsonl");
  ASSERT_EQ(r.dataset.size(), 1u);
  EXPECT_EQ(r.dataset[0].eeg.num_samples(), 400);
  ASSERT_EQ(r.rejected.size(), 1u);
  EXPECT_EQ(r.rejected[0].line, 2u);
  EXPECT_NE(r.rejected[0].reason.find("duration mismatch"), std::string::npos);

  {
    std::ofstream bad(dir / "bad.eegb", std::ios::binary);
    bad << "garbage";
  }
  auto e3 = entries[0];
  e3.eeg = "bad.eegb";
  data::write_manifest(dir / "manifest.jsonl", {e3});
  EXPECT_THROW(data::ingest_interchange(dir / "manifest.jsonl"), DataError);
  EXPECT_THROW(data::ingest_interchange(dir / "missing.jsonl"), DataError);
  fs::remove_all(dir);
}

TEST(Splits, NamesParse) {
  EXPECT_EQ(data::parse_split("val"), Split::kValidation);
  EXPECT_STREQ(data::split_name(Split::kTest), "test");
  EXPECT_THROW(data::parse_split("dev"), ConfigError);
}

}  // namespace
}  // namespace neurosteer
