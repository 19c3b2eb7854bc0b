// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "unicontrol/control.hpp"
#include "unicontrol/gradcheck_suite.hpp"
#include "unicontrol/ops.hpp"
#include "unicontrol/optimizer.hpp"
#include "unicontrol/tape.hpp"

using namespace uc;

namespace {

UNetConfig tiny_cfg() {
  UNetConfig u;
  u.image_size = 8;
  u.base_channels = 4;
  u.channel_mults = {1, 2, 4};
  u.time_embed_dim = 32;
  return u;
}

Model tiny_model(std::uint64_t seed = 11) {
  ControlConfig cc;
  cc.adapter_hidden = 6;
  return init_model(tiny_cfg(), cc, TaskRegistry::standard(), seed);
}

Tensor rand_tensor(std::vector<int> shape, Xoshiro256pp& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

bool any_nonzero(std::span<const float> v) {
  for (float x : v) {
    if (x != 0.0f) return true;
  }
  return false;
}

bool all_zero(std::span<const float> v) { return !any_nonzero(v); }

}  // namespace

TEST_CASE("adapter_forward: zero kernels of module k give zero output for task k") {
  Model m = tiny_model();
  for (int d = 0; d < m.control.adapter_depth; ++d) {
    for (auto& v : m.params.at("adapter2/conv" + std::to_string(d) + "/w").values_mut()) v = 0.0f;
    for (auto& v : m.params.at("adapter2/conv" + std::to_string(d) + "/b").values_mut()) v = 0.0f;
  }
  Xoshiro256pp rng(1);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  const Tensor out = adapter_forward(m, cond, 2);
  CHECK(all_zero(out.values()));  // silu(0) == 0 preserves the zero routing
}

TEST_CASE("adapter_forward: perturbing module j leaves task-k output bit-identical") {
  Model m = tiny_model();
  Xoshiro256pp rng(2);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  const Tensor before = adapter_forward(m, cond, 3);
  for (auto& v : m.params.at("adapter5/conv0/w").values_mut()) v += 0.37f;
  const Tensor after = adapter_forward(m, cond, 3);
  CHECK(bits_equal(before, after));
  CHECK_FALSE(bits_equal(adapter_forward(m, cond, 5), before));
  CHECK_THROWS_AS(adapter_forward(m, cond, 9), std::out_of_range);
  CHECK_THROWS_AS(adapter_forward(m, cond, -1), std::out_of_range);
}

TEST_CASE("adapter_forward with 1x1 kernels matches a per-pixel oracle") {
  UNetConfig u = tiny_cfg();
  u.image_size = 2;
  u.channel_mults = {1};
  ControlConfig cc;
  cc.adapter_hidden = 2;
  cc.adapter_kernel = 1;
  Model m = init_model(u, cc, TaskRegistry::standard(), 3);

  // Hand-set 1x1 kernels.
  auto w0 = m.params.at("adapter0/conv0/w").values_mut();  // [2,3,1,1]
  const float W0[2][3] = {{0.5f, -0.25f, 1.0f}, {0.125f, 0.75f, -0.5f}};
  for (int o = 0; o < 2; ++o) {
    for (int c = 0; c < 3; ++c) w0[static_cast<std::size_t>(o * 3 + c)] = W0[o][c];
  }
  auto b0 = m.params.at("adapter0/conv0/b").values_mut();
  b0[0] = 0.1f;
  b0[1] = -0.2f;
  auto w1 = m.params.at("adapter0/conv1/w").values_mut();  // [4,2,1,1]
  const float W1[4][2] = {{1.0f, 0.5f}, {-0.5f, 0.25f}, {0.75f, -1.0f}, {0.0f, 2.0f}};
  for (int o = 0; o < 4; ++o) {
    for (int c = 0; c < 2; ++c) w1[static_cast<std::size_t>(o * 2 + c)] = W1[o][c];
  }
  auto b1 = m.params.at("adapter0/conv1/b").values_mut();
  for (int o = 0; o < 4; ++o) b1[static_cast<std::size_t>(o)] = 0.05f * o;

  Xoshiro256pp rng(4);
  const Tensor cond = rand_tensor({3, 2, 2}, rng);
  const Tensor out = adapter_forward(m, cond, 0);

  const auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  for (int px = 0; px < 4; ++px) {
    double h[2];
    for (int o = 0; o < 2; ++o) {
      double acc = (o == 0 ? 0.1 : -0.2);
      for (int c = 0; c < 3; ++c) acc += W0[o][c] * cond.values()[static_cast<std::size_t>(c * 4 + px)];
      h[o] = acc * sigmoid(acc);
    }
    for (int o = 0; o < 4; ++o) {
      double acc = 0.05 * o;
      for (int c = 0; c < 2; ++c) acc += W1[o][c] * h[c];
      acc = acc * sigmoid(acc);
      CHECK(out.values()[static_cast<std::size_t>(o * 4 + px)] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("hyper_modulations: unit bias at zero embedding, 7 vectors, channel counts") {
  Model m = tiny_model();
  const auto mods = hyper_modulations(m, Tensor::zeros({kTextEmbedDim}));
  REQUIRE(mods.size() == 7);
  const auto inj = m.unet.injection_channels();
  for (std::size_t i = 0; i < mods.size(); ++i) {
    CHECK(mods[i].dim(0) == inj[i]);
    for (float v : mods[i].values()) CHECK(v == doctest::Approx(1.0));  // affine with unit bias
  }
  CHECK_THROWS_AS(hyper_modulations(m, Tensor::zeros({32})), std::invalid_argument);
}

TEST_CASE("hyper_modulations is affine: bias-removed output is linear in the embedding") {
  Model m = tiny_model();
  Xoshiro256pp rng(5);
  const Tensor e1 = rand_tensor({kTextEmbedDim}, rng);
  const Tensor e2 = rand_tensor({kTextEmbedDim}, rng);
  const float a = 0.6f, b = -1.1f;
  Tensor combo = Tensor::zeros({kTextEmbedDim});
  for (int i = 0; i < kTextEmbedDim; ++i) {
    combo.values_mut()[static_cast<std::size_t>(i)] =
        a * e1.values()[static_cast<std::size_t>(i)] + b * e2.values()[static_cast<std::size_t>(i)];
  }
  const auto m1 = hyper_modulations(m, e1);
  const auto m2 = hyper_modulations(m, e2);
  const auto mc = hyper_modulations(m, combo);
  // Explicit matrix-product oracle for head 4.
  const Tensor& w = m.params.at("hyper/out4/w");
  const Tensor& bias = m.params.at("hyper/out4/b");
  const int rows = w.dim(0);
  for (int r = 0; r < rows; ++r) {
    double oracle = bias.values()[static_cast<std::size_t>(r)];
    for (int c = 0; c < kTextEmbedDim; ++c) {
      oracle += static_cast<double>(w.values()[static_cast<std::size_t>(r * kTextEmbedDim + c)]) *
                combo.values()[static_cast<std::size_t>(c)];
    }
    CHECK(mc[4].values()[static_cast<std::size_t>(r)] == doctest::Approx(oracle).epsilon(1e-5));
    const double lin = a * (m1[4].values()[static_cast<std::size_t>(r)] -
                            bias.values()[static_cast<std::size_t>(r)]) +
                       b * (m2[4].values()[static_cast<std::size_t>(r)] -
                            bias.values()[static_cast<std::size_t>(r)]);
    CHECK(mc[4].values()[static_cast<std::size_t>(r)] - bias.values()[static_cast<std::size_t>(r)] ==
          doctest::Approx(lin).epsilon(1e-5));
  }
}

TEST_CASE("modulated_zero_conv closed forms") {
  Model m = tiny_model();
  Xoshiro256pp rng(6);
  const auto inj = m.unet.injection_channels();
  const Tensor features = rand_tensor({inj[0], 8, 8}, rng);

  // Zero-initialized kernel and bias: zero output regardless of modulation.
  const Tensor mod = rand_tensor({inj[0]}, rng, 0.5, 2.0);
  CHECK(all_zero(modulated_zero_conv(m, features, 0, mod).values()));

  // Randomize the layer, then all-ones modulation equals the plain conv.
  auto wv = m.params.at("zero/out0/w").values_mut();
  for (auto& v : wv) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  auto bv = m.params.at("zero/out0/b").values_mut();
  for (auto& v : bv) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const Tensor ones = Tensor::ones({inj[0]});
  const Tensor plain = conv2d(features, m.params.at("zero/out0/w"), m.params.at("zero/out0/b"));
  CHECK(bits_equal(modulated_zero_conv(m, features, 0, ones), plain));

  CHECK_THROWS_AS(modulated_zero_conv(m, features, 0, Tensor::ones({inj[0] + 1})),
                  std::invalid_argument);
  CHECK_THROWS_AS(modulated_zero_conv(m, features, 7, ones), std::out_of_range);
}

TEST_CASE("modulated_zero_conv: single-channel arithmetic is forced") {
  // 1 input channel, kernel 0.5, modulation 3, input 2, bias 0 -> 3.0
  UNetConfig u;
  u.image_size = 4;
  u.base_channels = 1;
  u.channel_mults = {1};
  u.time_embed_dim = 8;
  ControlConfig cc;
  cc.adapter_hidden = 2;
  Model m = init_model(u, cc, TaskRegistry::standard(), 7);
  m.params.at("zero/out0/w").values_mut()[0] = 0.5f;
  const Tensor x = Tensor::full({1, 4, 4}, 2.0f);
  const Tensor mod = Tensor::from({1}, {3.0f});
  const Tensor y = modulated_zero_conv(m, x, 0, mod);
  for (float v : y.values()) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("modulation kernel-equivalence: scaling input channels equals pre-scaling the kernel") {
  Model m = tiny_model();
  Xoshiro256pp rng(8);
  const auto inj = m.unet.injection_channels();
  const int layer = 3;
  auto wv = m.params.at("zero/out3/w").values_mut();
  for (auto& v : wv) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const Tensor features = rand_tensor({inj[static_cast<std::size_t>(layer)], 4, 4}, rng);
  const Tensor mod = rand_tensor({inj[static_cast<std::size_t>(layer)]}, rng, 0.25, 1.75);

  const Tensor got = modulated_zero_conv(m, features, layer, mod);

  Tensor scaled_kernel = m.params.at("zero/out3/w").clone();
  const int cout = scaled_kernel.dim(0), cin = scaled_kernel.dim(1);
  for (int o = 0; o < cout; ++o) {
    for (int c = 0; c < cin; ++c) {
      scaled_kernel.values_mut()[static_cast<std::size_t>(o * cin + c)] *=
          mod.values()[static_cast<std::size_t>(c)];
    }
  }
  const Tensor want = conv2d(features, scaled_kernel, m.params.at("zero/out3/b"));
  for (std::size_t i = 0; i < got.values().size(); ++i) {
    CHECK(std::abs(got.values()[i] - want.values()[i]) < 1e-6);
  }
}

TEST_CASE("zero-init identity: controlled_denoise equals base_forward bitwise") {
  Model m = tiny_model(17);
  Xoshiro256pp rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const Tensor x_t = rand_tensor({3, 8, 8}, rng);
    const Tensor cond = rand_tensor({3, 8, 8}, rng);
    const Tensor text = encode_text(trial % 2 ? "a red circle" : "");
    const int t = 1 + static_cast<int>(rng.below(200));
    const int task = static_cast<int>(rng.below(9));
    const Tensor controlled = controlled_denoise(m, x_t, t, text, cond, task);
    const Tensor base = base_forward(m.params, m.unet, x_t, t, text).eps;
    CHECK(bits_equal(controlled, base));
  }
}

TEST_CASE("zeroing the Z1 bridges restores base behavior after perturbation") {
  Model m = tiny_model(18);
  Xoshiro256pp rng(10);
  // Simulate training: move everything trainable off init.
  for (const auto& name : trainable_names(m)) {
    for (auto& v : m.params.at(name).values_mut()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  const Tensor x_t = rand_tensor({3, 8, 8}, rng);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  const Tensor text = encode_text("a yellow rectangle");
  const Tensor base = base_forward(m.params, m.unet, x_t, 40, text).eps;
  CHECK_FALSE(bits_equal(controlled_denoise(m, x_t, 40, text, cond, 1), base));
  for (int i = 0; i < 7; ++i) {
    for (auto& v : m.params.at("zero/out" + std::to_string(i) + "/w").values_mut()) v = 0.0f;
    for (auto& v : m.params.at("zero/out" + std::to_string(i) + "/b").values_mut()) v = 0.0f;
  }
  CHECK(bits_equal(controlled_denoise(m, x_t, 40, text, cond, 1), base));
}

TEST_CASE("gradient gating: hypernet, input bridge and copy are blocked at init") {
  Model m = tiny_model(19);
  Xoshiro256pp rng(11);
  const Tensor x_t = rand_tensor({3, 8, 8}, rng);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  const Tensor text = encode_text("a magenta triangle");
  const Tensor target = rand_tensor({3, 8, 8}, rng);

  const auto run_backward = [&]() {
    for (const auto& name : trainable_names(m)) m.params.at(name).zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = mse(controlled_denoise(m, x_t, 25, text, cond, 4), target);
    }
    backward(tape, loss);
  };

  run_backward();
  // (b) theta_H, theta_2 and all of G exactly zero.
  for (const auto& name : trainable_names(m)) {
    if (name.rfind("hyper/", 0) == 0 || name.rfind("zero/in/", 0) == 0 ||
        name.rfind("ctrl/", 0) == 0 || name.rfind("adapter", 0) == 0) {
      INFO(name);
      CHECK(all_zero(m.params.at(name).grad()));
    }
  }
  // (a) some outer Z1 parameter has nonzero gradient.
  bool z1_nonzero = false;
  for (int i = 0; i < 7; ++i) {
    z1_nonzero = z1_nonzero ||
                 any_nonzero(m.params.at("zero/out" + std::to_string(i) + "/w").grad()) ||
                 any_nonzero(m.params.at("zero/out" + std::to_string(i) + "/b").grad());
  }
  CHECK(z1_nonzero);

  // One optimizer step, then gradients reach theta_H and G.
  std::vector<std::pair<std::string, Tensor>> trainables;
  for (const auto& name : trainable_names(m)) trainables.emplace_back(name, m.params.at(name));
  AdamW opt(trainables, {});
  opt.step();

  run_backward();
  bool hyper_nonzero = false, ctrl_nonzero = false;
  for (const auto& name : trainable_names(m)) {
    if (name.rfind("hyper/", 0) == 0) hyper_nonzero = hyper_nonzero || any_nonzero(m.params.at(name).grad());
    if (name.rfind("ctrl/", 0) == 0) ctrl_nonzero = ctrl_nonzero || any_nonzero(m.params.at(name).grad());
  }
  CHECK(hyper_nonzero);
  CHECK(ctrl_nonzero);
}

TEST_CASE("routing isolation: gradients of module j are exactly zero on task-k batches") {
  Model m = tiny_model(20);
  Xoshiro256pp rng(12);
  // Make the bridges live so adapter gradients actually flow.
  for (const auto& name : trainable_names(m)) {
    if (name.rfind("zero/", 0) == 0) {
      for (auto& v : m.params.at(name).values_mut()) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    }
  }
  const Tensor x_t = rand_tensor({3, 8, 8}, rng);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  const Tensor text = encode_text("a cyan figure");
  const Tensor target = rand_tensor({3, 8, 8}, rng);

  const int k = 6;
  for (const auto& name : trainable_names(m)) m.params.at(name).zero_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = mse(controlled_denoise(m, x_t, 12, text, cond, k), target);
  }
  backward(tape, loss);

  bool own_nonzero = false;
  for (int j = 0; j < m.num_tasks(); ++j) {
    const std::string prefix = "adapter" + std::to_string(j) + "/";
    for (const auto& name : m.params.names_with_prefix(prefix)) {
      if (j == k) {
        own_nonzero = own_nonzero || any_nonzero(m.params.at(name).grad());
      } else {
        INFO(name);
        CHECK(all_zero(m.params.at(name).grad()));
      }
    }
  }
  CHECK(own_nonzero);
}

TEST_CASE("blend_adapters: one-hot equals adapter_forward exactly") {
  Model m = tiny_model(21);
  Xoshiro256pp rng(13);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  std::vector<float> weights(9, 0.0f);
  weights[4] = 1.0f;
  const Tensor blended = blend_adapters(m, cond, weights);
  const Tensor direct = adapter_forward(m, cond, 4);
  REQUIRE(blended.shape() == direct.shape());
  for (std::size_t i = 0; i < blended.values().size(); ++i) {
    CHECK(blended.values()[i] == direct.values()[i]);
  }
}

TEST_CASE("blend_adapters: validation and the colorization recipe") {
  Model m = tiny_model(22);
  Xoshiro256pp rng(14);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);

  std::vector<float> w(9, 0.0f);
  w[static_cast<std::size_t>(m.registry.index_of("depth"))] = 0.6f;
  w[static_cast<std::size_t>(m.registry.index_of("seg"))] = 0.3f;
  w[static_cast<std::size_t>(m.registry.index_of("canny"))] = 0.1f;
  const Tensor blended = blend_adapters(m, cond, w);
  for (float v : blended.values()) CHECK(std::isfinite(v));

  std::vector<float> negative(9, 0.0f);
  negative[0] = 1.2f;
  negative[1] = -0.2f;
  CHECK_THROWS_AS(blend_adapters(m, cond, negative), std::invalid_argument);
  std::vector<float> unnormalized(9, 0.2f);
  CHECK_THROWS_AS(blend_adapters(m, cond, unnormalized), std::invalid_argument);
}

TEST_CASE("blend_adapters: equal blend is the elementwise mean and linearity holds") {
  Model m = tiny_model(23);
  Xoshiro256pp rng(15);
  const Tensor cond = rand_tensor({3, 8, 8}, rng);
  std::vector<float> w(9, 0.0f);
  w[2] = 0.5f;
  w[7] = 0.5f;
  const Tensor blended = blend_adapters(m, cond, w);
  const Tensor a = adapter_forward(m, cond, 2);
  const Tensor b = adapter_forward(m, cond, 7);
  for (std::size_t i = 0; i < blended.values().size(); ++i) {
    const double mean = 0.5 * (static_cast<double>(a.values()[i]) + b.values()[i]);
    CHECK(std::abs(blended.values()[i] - mean) < 1e-6);
  }

  // Unnormalized-sum linearity: blend(a*w1 + b*w2) = a*blend(w1) + b*blend(w2).
  std::vector<float> w1(9, 0.0f), w2(9, 0.0f);
  w1[1] = 1.0f;
  w2[5] = 1.0f;
  const float ca = 0.25f, cb = 0.75f;
  std::vector<float> combo(9, 0.0f);
  combo[1] = ca;
  combo[5] = cb;
  const Tensor f_combo = blend_adapters(m, cond, combo);
  const Tensor f1 = blend_adapters(m, cond, w1);
  const Tensor f2 = blend_adapters(m, cond, w2);
  for (std::size_t i = 0; i < f_combo.values().size(); ++i) {
    const double lin = ca * static_cast<double>(f1.values()[i]) + cb * f2.values()[i];
    CHECK(std::abs(f_combo.values()[i] - lin) < 1e-6);
  }
}

TEST_CASE("tiny-config controlled_denoise gradcheck covers the hypernet paths") {
  const GradCheckReport report = gradcheck(tiny_controlled_denoise_builder(), 55, 1e-4);
  INFO(report.to_text());
  CHECK(report.all_below(1e-4));
  bool saw_hyper = false;
  for (const auto& e : report.entries) saw_hyper = saw_hyper || e.name.rfind("hyper/", 0) == 0;
  CHECK(saw_hyper);
}
