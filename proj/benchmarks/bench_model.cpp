#include <benchmark/benchmark.h>

#include "pseudoseg/model.hpp"
#include "pseudoseg/random.hpp"
#include "pseudoseg/training.hpp"

namespace {

using namespace pseudoseg;

Image noise(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img = make_image(size, size);
  for (double& v : img.values()) v = uniform_unit(rng);
  return img;
}

BinaryMask centre_box(int size) {
  BinaryMask m = make_mask(size, size);
  for (int y = size / 4; y < 3 * size / 4; ++y) {
    for (int x = size / 4; x < 3 * size / 4; ++x) m(x, y) = 1;
  }
  return m;
}

void BM_ExtractFeatures(benchmark::State& state) {
  const Image img = noise(64, 1);
  const ModelParams params = initialize_model(static_cast<int>(state.range(0)), 16, 20.0, 2);
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(img, params));
}
BENCHMARK(BM_ExtractFeatures)->Arg(1)->Arg(2)->Arg(3);

void BM_Predict(benchmark::State& state) {
  const ModelParams params = initialize_model(2, 16, 20.0, 2);
  const std::vector<SupportExample> support(static_cast<std::size_t>(state.range(0)),
                                            SupportExample{noise(64, 3), centre_box(64)});
  const Image query = noise(64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(predict(support, query, params));
}
BENCHMARK(BM_Predict)->Arg(1)->Arg(5);

// Forward and backward through both pathways, as in one training episode.
void BM_TrainingStep(benchmark::State& state) {
  ModelParams params = initialize_model(2, 16, 20.0, 2);
  const std::vector<SupportExample> support = {{noise(64, 5), centre_box(64)}};
  const Image query = noise(64, 6);
  const BinaryMask mask = centre_box(64);
  BinaryMask pseudo = make_mask(64, 64);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 64; ++x) pseudo(x, y) = 1;
  }
  const PseudoMaskSource source = [&](const FeatureMap&) { return std::optional(pseudo); };
  MomentumState momentum;
  for (auto _ : state) {
    const EpisodeTrace trace = forward_episode(params, support, query, mask, 0.5, 1e-7, source);
    sgd_step(params, backward(trace, params), 1e-4, 0.9, momentum);
  }
}
BENCHMARK(BM_TrainingStep);

}  // namespace
