#include <benchmark/benchmark.h>

#include <random>

#include "cdupatch/compositor.hpp"
#include "cdupatch/data_pipeline.hpp"
#include "cdupatch/ir_adapter.hpp"
#include "cdupatch/patch_trainer.hpp"
#include "cdupatch/toy_detector.hpp"

using namespace cdupatch;

namespace {

Image noise(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image img(h, w, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

}  // namespace

static void BM_DetectorForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  ToyDetectorConfig cfg;
  const ToyDetector det(cfg, 1);
  const Image img = noise(side, side, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(det.decode(det.forward(img)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DetectorForward)->Arg(64)->Arg(96)->Arg(128);

static void BM_DetectorBackward(benchmark::State& state) {
  ToyDetectorConfig cfg;
  const ToyDetector det(cfg, 1);
  const Image img = noise(96, 96, 3, 3);
  const auto f = det.forward(img);
  const std::vector<LabeledBox> gt{{0, Box{20, 20, 50, 40}}};
  nn::RowMatrix gh;
  detector_loss(det, f, gt, 1.0, 0.9, &gh);
  std::vector<double> grad(det.parameters().size());
  Image gin;
  for (auto _ : state) {
    det.backward(f, gh, grad, &gin);
    benchmark::DoNotOptimize(gin.data.data());
  }
}
BENCHMARK(BM_DetectorBackward);

static void BM_PatchWarp(benchmark::State& state) {
  const int patch = static_cast<int>(state.range(0));
  const Image p = noise(patch, patch, 3, 4);
  const Placement pl = placement_from_bbox({10, 10, 70, 60}, 0.3);
  const TransformSample t = sample_transform(EotConfig{}, 5, 0);
  for (auto _ : state) {
    PatchWarp warp(patch, 3, pl, t, 96, 96);
    benchmark::DoNotOptimize(warp.forward(p).data.data());
  }
}
BENCHMARK(BM_PatchWarp)->Arg(16)->Arg(64)->Arg(256);

static void BM_AdapterPredict(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const AdapterModel model = AdapterModel::initialized(6);
  const Image rgb = noise(side, side, 3, 7);
  for (auto _ : state) benchmark::DoNotOptimize(predict_ir(model, rgb).data.data());
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_AdapterPredict)->Arg(32)->Arg(256);

static void BM_ObjectiveStep(benchmark::State& state) {
  SyntheticConfig sc;
  const auto scenes = synthesize_scenes(16, sc, 8);
  ToyDetectorConfig v, i;
  i.in_channels = 1;
  const DetectorHandle victim = make_toy_handle("bench", ToyDetector(v, 1), ToyDetector(i, 2));
  const AdapterModel adapter = AdapterModel::initialized(9);
  AttackConfig cfg;
  cfg.patch_size = 32;
  std::vector<ImagePair> storage;
  const auto batch = sample_batch(scenes, cfg, 0, storage);
  const PatchObjective obj(victim, &adapter, cfg);
  const Image patch = noise(32, 32, 3, 10);
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(patch, batch, true).terms.total);
}
BENCHMARK(BM_ObjectiveStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
