#include <benchmark/benchmark.h>

#include "pseudoseg/random.hpp"
#include "pseudoseg/superpixel.hpp"

namespace {

using namespace pseudoseg;

Image noise(int size) {
  Rng rng(1);
  Image img = make_image(size, size);
  for (double& v : img.values()) v = uniform_unit(rng);
  return img;
}

void BM_Felzenszwalb(benchmark::State& state) {
  const Image img = noise(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(felzenszwalb(img, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Felzenszwalb)->Arg(64)->Arg(128)->Arg(256);

void BM_Slic(benchmark::State& state) {
  const Image img = noise(static_cast<int>(state.range(0)));
  SlicParams p;
  for (auto _ : state) benchmark::DoNotOptimize(slic(img, p));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Slic)->Arg(64)->Arg(128);

void BM_Grid(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(grid_partition(256, 256, 10, 10));
}
BENCHMARK(BM_Grid);

}  // namespace
