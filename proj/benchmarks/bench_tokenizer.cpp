#include <benchmark/benchmark.h>

#include "motiongen/scenario_gen.hpp"
#include "motiongen/tokenizer.hpp"

namespace {

using namespace motiongen;

void bm_tokenize_track(benchmark::State& state) {
  const Scenario s = generate_scenario("straight", 42);
  const TokenizerConfig cfg;
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& track = s.agents[i % s.agents.size()];
    benchmark::DoNotOptimize(tokenize(track, cfg));
    ++i;
  }
}
BENCHMARK(bm_tokenize_track);

void bm_detokenize_track(benchmark::State& state) {
  const Scenario s = generate_scenario("straight", 42);
  const TokenizerConfig cfg;
  const TokenizedTrack tt = tokenize(s.agents[0], cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(detokenize(tt, cfg));
  }
}
BENCHMARK(bm_detokenize_track);

}  // namespace
