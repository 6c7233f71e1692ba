#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "neurosteer/losses.hpp"
#include "neurosteer/metrics.hpp"
#include "neurosteer/model.hpp"
#include "neurosteer/runtime.hpp"
#include "neurosteer/signals.hpp"

namespace {

namespace ns = neurosteer;
using ns::ag::Matrix;

constexpr double kEegRate = 8000.0 / 60.0;

std::vector<double> noise(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

ns::model::ModelConfig bench_model() {
  ns::model::ModelConfig c;
  c.eeg = {8, 16, 1, 1, 2, 0.0};
  c.extractor.width = 16;
  c.extractor.blocks = 1;
  c.extractor.chunk = 50;
  c.extractor.hidden = 8;
  c.aad.width = 16;
  c.aad.stim_layers = 1;
  c.aad.ff_multiplier = 2;
  c.aad.dropout = 0.0;
  return c;
}

void BM_SiSdr(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  const auto s = noise(n, 1), e = noise(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ns::signals::si_sdr(s, e));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_SiSdr)->Arg(8000)->Arg(8000 * 15);

void BM_Stoi(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  auto s = noise(n, 1);
  auto e = s;
  const auto d = noise(n, 3);
  for (size_t i = 0; i < n; ++i) e[i] += 0.5 * d[i];
  for (auto _ : state) benchmark::DoNotOptimize(ns::metrics::stoi(s, e));
}
BENCHMARK(BM_Stoi)->Arg(8000 * 3)->Unit(benchmark::kMillisecond);

struct Inputs {
  Matrix mixture, target, eeg;
};

Inputs make_inputs(double seconds) {
  const auto n = static_cast<Eigen::Index>(seconds * ns::signals::kAudioRate);
  const auto frames = static_cast<Eigen::Index>(seconds * kEegRate);
  Inputs in;
  const auto m = noise(static_cast<size_t>(n), 4), t = noise(static_cast<size_t>(n), 5);
  in.mixture = Eigen::Map<const Matrix>(m.data(), n, 1);
  in.target = Eigen::Map<const Matrix>(t.data(), n, 1);
  const auto e = noise(static_cast<size_t>(8 * frames), 6);
  in.eeg = Eigen::Map<const Matrix>(e.data(), 8, frames);
  return in;
}

void BM_ExtractorForward(benchmark::State& state) {
  ns::model::Model model(bench_model(), 7);
  const auto in = make_inputs(static_cast<double>(state.range(0)));
  const ns::nn::ForwardContext ctx;
  ns::ag::NoGradGuard guard;
  for (auto _ : state) {
    const auto eeg_rep = model.eeg_encoder().encode(in.eeg, kEegRate, ctx);
    auto out = model.extractor().extract(ns::ag::constant(in.mixture), &eeg_rep, ctx);
    benchmark::DoNotOptimize(out.s_hat.value().data());
  }
}
BENCHMARK(BM_ExtractorForward)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ExtractorTrainStep(benchmark::State& state) {
  ns::model::Model model(bench_model(), 7);
  const auto in = make_inputs(static_cast<double>(state.range(0)));
  std::mt19937_64 rng(8);
  const ns::nn::ForwardContext ctx{true, &rng};
  for (auto _ : state) {
    model.zero_grad();
    const auto eeg_rep = model.eeg_encoder().encode(in.eeg, kEegRate, ctx);
    auto out = model.extractor().extract(ns::ag::constant(in.mixture), &eeg_rep, ctx);
    ns::ag::backward(ns::loss::si_sdr_loss(in.target, out.s_hat));
  }
}
BENCHMARK(BM_ExtractorTrainStep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_AadForward(benchmark::State& state) {
  ns::model::Model model(bench_model(), 7);
  const auto in = make_inputs(static_cast<double>(state.range(0)));
  const ns::nn::ForwardContext ctx;
  ns::ag::NoGradGuard guard;
  const auto a = ns::ag::constant(in.mixture), b = ns::ag::constant(in.target);
  for (auto _ : state) {
    auto p = ns::model::aad_forward(in.eeg, kEegRate, a, b, model.eeg_encoder(), model.aad(), ctx);
    benchmark::DoNotOptimize(p.value().data());
  }
}
BENCHMARK(BM_AadForward)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  neurosteer::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
