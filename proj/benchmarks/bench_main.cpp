// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "unicontrol/conditions.hpp"
#include "unicontrol/control.hpp"
#include "unicontrol/diffusion.hpp"
#include "unicontrol/ops.hpp"
#include "unicontrol/scene.hpp"
#include "unicontrol/tape.hpp"
#include "unicontrol/tasks.hpp"

using namespace uc;

namespace {

Tensor rand_tensor(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

Model default_model() {
  return init_model(UNetConfig{}, ControlConfig{}, TaskRegistry::standard(), 1);
}

void BM_Conv2dForward(benchmark::State& state) {
  Xoshiro256pp rng(1);
  const int c = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  const Tensor x = rand_tensor({c, s, s}, rng);
  const Tensor w = rand_tensor({c, c, 3, 3}, rng);
  const Tensor b = rand_tensor({c}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * 2ll * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv2dForward)->Args({32, 32})->Args({64, 16})->Args({128, 8});

void BM_ConvNetBackward(benchmark::State& state) {
  Xoshiro256pp rng(2);
  const Tensor x = rand_tensor({32, 32, 32}, rng);
  Tensor w = rand_tensor({32, 32, 3, 3}, rng);
  Tensor b = rand_tensor({32}, rng);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  const Tensor target = rand_tensor({32, 32, 32}, rng);
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = mse(silu(conv2d(x, w, b, 1, 1)), target);
    }
    backward(tape, loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_ConvNetBackward);

void BM_AdapterForward(benchmark::State& state) {
  const Model m = default_model();
  Xoshiro256pp rng(3);
  const Tensor cond = rand_tensor({3, 32, 32}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapter_forward(m, cond, 1));
  }
}
BENCHMARK(BM_AdapterForward);

void BM_ControlledDenoise(benchmark::State& state) {
  const Model m = default_model();
  Xoshiro256pp rng(4);
  const Tensor x = rand_tensor({3, 32, 32}, rng);
  const Tensor cond = rand_tensor({3, 32, 32}, rng);
  const Tensor text = encode_text("a red circle on a gray background");
  for (auto _ : state) {
    benchmark::DoNotOptimize(controlled_denoise(m, x, 100, text, cond, 1));
  }
}
BENCHMARK(BM_ControlledDenoise)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  Model m = default_model();
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Xoshiro256pp rng(5);
  std::vector<BatchItem> batch;
  for (int i = 0; i < 4; ++i) {
    const SceneBundle bundle = synth_scene(static_cast<std::uint64_t>(i), 32);
    Xoshiro256pp crng(static_cast<std::uint64_t>(i) + 100);
    BatchItem item;
    item.image = bundle.image;
    item.cond = derive_condition(bundle.scene, bundle.image, "canny", crng);
    item.text_emb = encode_text(bundle.prompt);
    item.task_key = "canny";
    item.task_index = m.registry.index_of("canny");
    batch.push_back(std::move(item));
  }
  const DenoiseFn fn = [&](const Tensor& x_t, int t, const Tensor& text, const BatchItem& item) {
    return controlled_denoise(m, x_t, t, text, item.cond, item.task_index);
  };
  for (auto _ : state) {
    for (const auto& name : trainable_names(m)) m.params.at(name).zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = training_loss(fn, batch, s, 0.3, rng);
    }
    backward(tape, loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetLabel("batch=4");
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_EncodeText(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_text("a red circle and a blue rectangle on a gray background"));
  }
}
BENCHMARK(BM_EncodeText);

void BM_SceneSynthesis(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(synth_scene(seed++, 32));
  }
}
BENCHMARK(BM_SceneSynthesis);

void BM_CannyDerivation(benchmark::State& state) {
  const SceneBundle bundle = synth_scene(7, 32);
  Xoshiro256pp rng(8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(derive_condition(bundle.scene, bundle.image, "canny", rng));
  }
}
BENCHMARK(BM_CannyDerivation);

}  // namespace

BENCHMARK_MAIN();
