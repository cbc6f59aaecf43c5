#include <benchmark/benchmark.h>

#include <random>

#include "lifechain/knowledge_index.hpp"

using namespace lifechain;

namespace {

Vector random_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (double& x : v) x = n(rng);
  return v;
}

RetrievalTable filled_table(std::size_t records, std::size_t d) {
  RetrievalTable table(IndexParams{7, 16, 4, 64}, d);
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < records; ++i) {
    table.insert({ClientId{static_cast<std::uint32_t>(i % 20)}, {0, 0}, random_vector(d, rng)});
  }
  return table;
}

void BM_KrvCompute(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  const HyperplaneSet hp(IndexParams{3, 16, 4, 64}, d);
  std::mt19937_64 rng(2);
  const Vector v = random_vector(d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(compute_krv(hp, v));
}
BENCHMARK(BM_KrvCompute)->Arg(72)->Arg(1000)->Arg(4000);

void BM_BucketedQuery(benchmark::State& state) {
  const auto table = filled_table(static_cast<std::size_t>(state.range(0)), 72);
  std::mt19937_64 rng(3);
  const Vector probe = random_vector(72, rng);
  QueryStats stats;
  for (auto _ : state) benchmark::DoNotOptimize(table.query(probe, 10, &stats));
  state.counters["comparisons"] =
      benchmark::Counter(static_cast<double>(stats.comparisons) / static_cast<double>(stats.queries));
}
BENCHMARK(BM_BucketedQuery)->RangeMultiplier(4)->Range(256, 16384);

void BM_LinearQuery(benchmark::State& state) {
  const auto table = filled_table(static_cast<std::size_t>(state.range(0)), 72);
  std::mt19937_64 rng(3);
  const Vector probe = random_vector(72, rng);
  for (auto _ : state) benchmark::DoNotOptimize(table.query_linear(probe, 10));
}
BENCHMARK(BM_LinearQuery)->RangeMultiplier(4)->Range(256, 16384);

}  // namespace
