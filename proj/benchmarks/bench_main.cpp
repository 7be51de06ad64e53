#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "trex/bpe.hpp"
#include "trex/regressor.hpp"

namespace {

std::string sample_text(std::size_t bytes) {
  std::mt19937_64 rng(42);
  static const std::vector<std::string> words{
      "the", "quick", "brown", "tokenizer", "compresses", "multilingual",
      "text", "into", "subword", "units", "with", "byte", "level", "merges"};
  std::string out;
  while (out.size() < bytes) {
    out += words[rng() % words.size()];
    out += (rng() % 12 == 0) ? '\n' : ' ';
  }
  return out;
}

void BM_BpeTrain(benchmark::State& state) {
  const auto text = sample_text(static_cast<std::size_t>(state.range(0)));
  const auto vocab = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) {
    auto tok = trex::SubwordTokenizer::train(text, vocab);
    benchmark::DoNotOptimize(tok.merges().size());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_BpeTrain)
    ->Args({64 * 1024, 512})
    ->Args({512 * 1024, 1024})
    ->Args({2 * 1024 * 1024, 4096})
    ->Unit(benchmark::kMillisecond);

void BM_BpeEncode(benchmark::State& state) {
  const auto train_text = sample_text(256 * 1024);
  const auto tok = trex::SubwordTokenizer::train(train_text, 1024);
  const auto text = sample_text(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto seq = tok.encode(text);
    benchmark::DoNotOptimize(seq.ids.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_BpeEncode)->Arg(64 * 1024)->Arg(1024 * 1024)->Unit(
    benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::exponential_distribution<double> expo(1.0);
  auto simplex = [&rng, &expo](std::size_t k) {
    std::vector<double> w(k);
    double sum = 0.0;
    for (auto& x : w) {
      x = expo(rng);
      sum += x;
    }
    for (auto& x : w) x /= sum;
    return w;
  };
  trex::TrainingSet data;
  for (int i = 0; i < 512; ++i) {
    auto w = simplex(5);
    const double y = 0.8 + 0.2 * w[0] + 0.05 * w[1];
    data.features.push_back(std::move(w));
    data.targets.push_back(y);
  }
  const auto model = trex::RegressionModel::fit(data, {});
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(state.range(0)));
  for (std::int64_t i = 0; i < state.range(0); ++i) rows.push_back(simplex(5));
  for (auto _ : state) {
    auto preds = model.predict_batch(rows);
    benchmark::DoNotOptimize(preds.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          state.range(0));
}
BENCHMARK(BM_ModelPredict)->Arg(10'000)->Arg(100'000)->Unit(
    benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
