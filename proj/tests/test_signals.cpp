#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "neurosteer/dsp.hpp"
#include "neurosteer/errors.hpp"
#include "neurosteer/signals.hpp"

namespace neurosteer {
namespace {

using signals::AudioSignal;

std::vector<double> randn(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Correlation route: SI-SDR = 10 log10(rho^2 / (1 - rho^2)).
double si_sdr_via_correlation(const std::vector<double>& s, const std::vector<double>& e) {
  double se = 0, ss = 0, ee = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    se += s[i] * e[i];
    ss += s[i] * s[i];
    ee += e[i] * e[i];
  }
  const double rho2 = se * se / (ss * ee);
  return std::clamp(10.0 * std::log10(rho2 / (1.0 - rho2)), signals::kFloorDb, signals::kCapDb);
}

TEST(SiSdr, MatchesCorrelationForm) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = randn(256, rng);
    auto n = randn(256, rng);
    std::vector<double> e(256);
    const double mix = std::exp(std::uniform_real_distribution<double>(-2, 4)(rng));
    for (size_t i = 0; i < 256; ++i) e[i] = s[i] + mix * n[i];
    EXPECT_NEAR(signals::si_sdr(s, e), si_sdr_via_correlation(s, e), 1e-6);
  }
}

TEST(SiSdr, PerfectEstimateHitsCap) {
  std::mt19937_64 rng(12);
  auto s = randn(100, rng);
  EXPECT_DOUBLE_EQ(signals::si_sdr(s, s), signals::kCapDb);
}

TEST(SiSdr, ZeroEstimateHitsFloor) {
  std::mt19937_64 rng(13);
  auto s = randn(100, rng);
  std::vector<double> z(100, 0.0);
  EXPECT_DOUBLE_EQ(signals::si_sdr(s, z), signals::kFloorDb);
}

TEST(SiSdr, ZeroReferenceIsDegenerate) {
  std::vector<double> z(10, 0.0), e(10, 1.0);
  EXPECT_THROW(signals::si_sdr(z, e), DataError);
}

TEST(SiSdr, LengthMismatchIsShapeError) {
  std::vector<double> a(10, 1.0), b(11, 1.0);
  EXPECT_THROW(signals::si_sdr(a, b), ShapeError);
}

TEST(SiSdr, ScaleInvarianceAndSdrContrast) {
  std::mt19937_64 rng(14);
  auto s = randn(512, rng);
  auto n = randn(512, rng);
  std::vector<double> e(512);
  for (size_t i = 0; i < 512; ++i) e[i] = s[i] + 0.3 * n[i];
  const double base = signals::si_sdr(s, e);
  for (double c : {0.01, 0.1, 10.0, 100.0}) {
    std::vector<double> scaled(e);
    for (double& v : scaled) v *= c;
    EXPECT_NEAR(signals::si_sdr(s, scaled), base, 1e-6);
  }
  std::vector<double> ten(e);
  for (double& v : ten) v *= 10.0;
  EXPECT_GE(std::abs(signals::sdr(s, ten) - signals::sdr(s, e)), 1.0);
}

TEST(SiSdr, HandExamples) {
  std::vector<double> s{1, 0}, e{1, 1};
  EXPECT_NEAR(signals::si_sdr(s, e), 0.0, 1e-6);
  std::vector<double> s2{2, 0}, e2{1, 1};
  EXPECT_NEAR(signals::si_sdr(s2, e2), 0.0, 1e-6);  // reference scaling
  std::vector<double> a{1, 0}, b{0, 1}, two{2, 0};
  EXPECT_NEAR(signals::sdr(a, b), 10.0 * std::log10(0.5), 1e-6);
  EXPECT_NEAR(signals::sdr(a, two), 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(signals::si_sdr(a, two), signals::kCapDb);
}

TEST(MixAtSnr, GainExamples) {
  AudioSignal t(std::vector<double>{2, -2, 2, -2}), i(std::vector<double>{1, 1, -1, -1});
  EXPECT_NEAR(signals::mix_at_snr(t, i, 0.0).gain, 2.0, 1e-12);
  AudioSignal u(std::vector<double>{1, -1, 1, -1});
  EXPECT_NEAR(signals::mix_at_snr(u, i, 0.0).gain, 1.0, 1e-12);
  EXPECT_NEAR(signals::mix_at_snr(u, i, 20.0).gain, 0.1, 1e-12);
}

TEST(Sdr, KnownValue) {
  std::vector<double> s{1, 0, 0, 0}, e{1, 0.1, 0, 0};
  EXPECT_NEAR(signals::sdr(s, e), 20.0, 1e-6);
}

TEST(MixAtSnr, AchievesRequestedSnrExactly) {
  std::mt19937_64 rng(15);
  for (double snr : {-10.0, -3.3, 0.0, 7.5, 10.0}) {
    AudioSignal t(randn(800, rng)), i(randn(800, rng));
    auto m = signals::mix_at_snr(t, i, snr);
    const double measured =
        10.0 * std::log10(signals::mean_power(t.view()) / signals::mean_power(m.scaled_interferer.view()));
    EXPECT_NEAR(measured, snr, 1e-9);
    for (size_t k = 0; k < t.size(); ++k) {
      EXPECT_NEAR(m.mixture.samples[k], t.samples[k] + m.scaled_interferer.samples[k], 1e-12);
    }
  }
}

TEST(MixAtSnr, TargetIsNeverRescaled) {
  std::mt19937_64 rng(16);
  AudioSignal t(randn(100, rng)), i(randn(100, rng));
  auto m = signals::mix_at_snr(t, i, 5.0);
  EXPECT_NEAR(m.gain * signals::mean_power(i.view()) * m.gain,
              signals::mean_power(m.scaled_interferer.view()), 1e-12);
}

TEST(MixAtSnr, Errors) {
  AudioSignal t(std::vector<double>(10, 1.0)), z(std::vector<double>(10, 0.0)), shorter(std::vector<double>(9, 1.0));
  EXPECT_THROW(signals::mix_at_snr(t, z, 0.0), DataError);
  EXPECT_THROW(signals::mix_at_snr(t, shorter, 0.0), ShapeError);
}

TEST(Wav, RoundTripFloatAndPcm) {
  std::mt19937_64 rng(17);
  std::vector<double> x(1000);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (double& v : x) v = u(rng);
  const auto dir = std::filesystem::temp_directory_path() / "neurosteer_wav_test";
  std::filesystem::create_directories(dir);
  signals::write_wav(dir / "f.wav", AudioSignal(x), signals::WavEncoding::kFloat32);
  signals::write_wav(dir / "p.wav", AudioSignal(x), signals::WavEncoding::kPcm16);
  AudioSignal f = signals::read_wav(dir / "f.wav");
  AudioSignal p = signals::read_wav(dir / "p.wav");
  ASSERT_EQ(f.size(), x.size());
  ASSERT_EQ(p.size(), x.size());
  EXPECT_EQ(f.rate, 8000.0);
  for (size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(f.samples[i], x[i], 1e-7);
    EXPECT_NEAR(p.samples[i], x[i], 1.0 / 32768.0);
  }
  std::filesystem::remove_all(dir);
}

TEST(Wav, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "neurosteer_bad.wav";
  {
    std::ofstream out(path);
    out << "not a wav";
  }
  EXPECT_THROW(signals::read_wav(path), DataError);
  std::filesystem::remove(path);
}

TEST(Dsp, DeriveSeedIsOrderSensitiveAndStable) {
  EXPECT_EQ(dsp::derive_seed(1, {2, 3}), dsp::derive_seed(1, {2, 3}));
  EXPECT_NE(dsp::derive_seed(1, {2, 3}), dsp::derive_seed(1, {3, 2}));
  EXPECT_NE(dsp::derive_seed(1, {2}), dsp::derive_seed(2, {2}));
}

TEST(Dsp, ResamplePreservesInBandTone) {
  const double f = 440.0;
  std::vector<double> x(8000);
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 8000.0);
  auto y = dsp::resample(x, 5, 4);
  ASSERT_EQ(y.size(), 10000u);
  double err = 0.0;
  for (size_t i = 500; i < 9500; ++i) {
    err = std::max(err, std::abs(y[i] - std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 10000.0)));
  }
  EXPECT_LT(err, 0.02);
}

TEST(Dsp, DecimateRemovesAliasingTone) {
  // 3000 Hz at 8 kHz folds into the band after decimating by 4 unless filtered.
  std::vector<double> x(8000);
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * 3000.0 * static_cast<double>(i) / 8000.0);
  auto y = dsp::decimate(x, 4);
  EXPECT_EQ(y.size(), 2000u);
  double p = 0.0;
  for (size_t i = 100; i < 1900; ++i) p += y[i] * y[i];
  EXPECT_LT(p / 1800.0, 1e-3);
}

TEST(Dsp, BandpassPassesCentreAttenuatesFarBand) {
  auto tone = [](double f) {
    std::vector<double> x(8000);
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 8000.0);
    return x;
  };
  auto power = [](const std::vector<double>& v) { return signals::mean_power(std::span(v).subspan(2000)); };
  const double pass = power(dsp::bandpass(tone(1000.0), 8000.0, 1000.0, 2.0));
  const double stop = power(dsp::bandpass(tone(100.0), 8000.0, 1000.0, 2.0));
  EXPECT_NEAR(pass, 0.5, 0.02);
  EXPECT_LT(stop, 0.01);
}

TEST(Dsp, PinkNoiseHasFallingSpectrum) {
  std::mt19937_64 rng(3);
  auto p = dsp::pink_noise(1 << 14, rng);
  EXPECT_NEAR(signals::mean_power(p), 1.0, 1e-9);
  // Low band must carry much more power than an equally wide high band.
  auto low = dsp::fft_bandlimit(p, 1.0, 0.0, 0.02);
  auto high = dsp::fft_bandlimit(p, 1.0, 0.40, 0.42);
  EXPECT_GT(signals::mean_power(low), 5.0 * signals::mean_power(high));
}

TEST(Dsp, PearsonEdgeCases) {
  std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1}, k{1, 1, 1, 1};
  EXPECT_NEAR(dsp::pearson(a, b), 1.0, 1e-12);
  EXPECT_NEAR(dsp::pearson(a, c), -1.0, 1e-12);
  EXPECT_EQ(dsp::pearson(a, k), 0.0);
}

}  // namespace
}  // namespace neurosteer
