// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "unicontrol/gradcheck.hpp"
#include "unicontrol/ops.hpp"
#include "unicontrol/optimizer.hpp"
#include "unicontrol/tasks.hpp"
#include "unicontrol/unet.hpp"

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

Tensor rand_tensor(std::vector<int> shape, Xoshiro256pp& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("default config has 7 injection points with the expected channels") {
  const UNetConfig cfg;
  cfg.validate();
  const auto inj = cfg.injection_channels();
  REQUIRE(inj.size() == 7);  // 6 encoder skips + 1 middle
  CHECK(inj == std::vector<int>{32, 32, 32, 64, 64, 128, 128});

  UNetConfig bad;
  bad.image_size = 30;  // not divisible by 2^(levels-1)
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("base_forward: output shape equals input shape and runs deterministically") {
  const UNetConfig cfg = tiny_cfg();
  ParamStore store;
  Xoshiro256pp rng(3);
  init_base_params(store, cfg, rng);

  Xoshiro256pp in_rng(4);
  const Tensor x = rand_tensor({3, 8, 8}, in_rng);
  const Tensor text = encode_text("a green triangle on a white background");
  const BaseForwardResult r1 = base_forward(store, cfg, x, 17, text);
  const BaseForwardResult r2 = base_forward(store, cfg, x, 17, text);
  CHECK(r1.eps.shape() == x.shape());
  CHECK(bits_equal(r1.eps, r2.eps));
  REQUIRE(r1.features.size() == 7);
  const auto inj = cfg.injection_channels();
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(r1.features[i].dim(0) == inj[i]);
    CHECK(bits_equal(r1.features[i], r2.features[i]));
  }

  CHECK_THROWS_AS(base_forward(store, cfg, Tensor::zeros({3, 4, 4}), 17, text),
                  std::invalid_argument);
  CHECK_THROWS_AS(base_forward(store, cfg, x, 0, text), std::invalid_argument);
  CHECK_THROWS_AS(base_forward(store, cfg, x, 3, Tensor::zeros({16})), std::invalid_argument);
}

TEST_CASE("tiny-config base_forward passes gradcheck at 1e-4") {
  const GraphBuilder builder = [](Xoshiro256pp& rng) {
    UNetConfig cfg = tiny_cfg();
    cfg.channel_mults = {1, 2};  // keep the finite-difference sweep small
    ParamStore store;
    init_base_params(store, cfg, rng);
    for (const auto& name : store.names()) store.at(name).set_requires_grad(true);

    BuiltGraph g;
    g.tape = std::make_shared<Tape>();
    Tensor x = Tensor::zeros({3, 8, 8});
    for (auto& v : x.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor target = Tensor::zeros({3, 8, 8});
    for (auto& v : target.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const Tensor text = encode_text("a blue rectangle");
    {
      TapeScope scope(*g.tape);
      const BaseForwardResult r = base_forward(store, cfg, x, 5, text);
      g.loss = mse(r.eps, target);
    }
    for (const auto& name : store.names()) g.params.emplace_back(name, store.at(name));
    return g;
  };
  // Composite graph: finer step keeps FD truncation below the tolerance.
  const GradCheckReport report = gradcheck(builder, 21, 1e-4);
  INFO(report.to_text());
  CHECK(report.all_below(1e-4));
}

TEST_CASE("clone_trainable_copy: value-equal, trainable, encoder+middle only") {
  const UNetConfig cfg = tiny_cfg();
  ParamStore store;
  Xoshiro256pp rng(5);
  init_base_params(store, cfg, rng);
  clone_trainable_copy(store, cfg);

  std::set<std::string> copy_rel;
  for (const auto& name : store.names_with_prefix("ctrl/")) {
    const std::string rel = name.substr(5);
    copy_rel.insert(rel);
    const Tensor& base = store.at("base/" + rel);
    const Tensor& copy = store.at(name);
    CHECK(bits_equal(base, copy));
    CHECK(copy.requires_grad());
    CHECK_FALSE(base.requires_grad());
  }
  std::set<std::string> expected;
  for (const auto& name : store.names_with_prefix("base/")) {
    const std::string rel = name.substr(5);
    if (is_encoder_middle_param(rel)) expected.insert(rel);
  }
  CHECK(copy_rel == expected);

  // Copy is strictly smaller than the base (decoder and head excluded).
  CHECK(store.param_count("ctrl/") < store.param_count("base/"));
}

TEST_CASE("an optimizer step on the copy leaves every base tensor unchanged") {
  const UNetConfig cfg = tiny_cfg();
  ParamStore store;
  Xoshiro256pp rng(6);
  init_base_params(store, cfg, rng);
  clone_trainable_copy(store, cfg);

  std::vector<Tensor> base_before;
  for (const auto& name : store.names_with_prefix("base/")) base_before.push_back(store.at(name).clone());

  std::vector<std::pair<std::string, Tensor>> trainables;
  for (const auto& name : store.names_with_prefix("ctrl/")) trainables.emplace_back(name, store.at(name));
  AdamW opt(trainables, {});

  // A loss through the copy path only.
  Xoshiro256pp in_rng(7);
  const Tensor x = rand_tensor({3, 8, 8}, in_rng);
  const Tensor text = null_text_embedding();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const Tensor temb = time_text_embedding(store, "base/", cfg, 3, text);
    const UNetFeatures f = unet_encode(store, "ctrl/", cfg, x, temb);
    loss = mse(f.injections.back(), Tensor::zeros(f.injections.back().shape()));
  }
  opt.zero_grad();
  backward(tape, loss);
  opt.step();

  std::size_t i = 0;
  bool copy_changed = false;
  for (const auto& name : store.names_with_prefix("base/")) {
    CHECK(bits_equal(store.at(name), base_before[i++]));
  }
  for (const auto& name : store.names_with_prefix("ctrl/")) {
    if (!bits_equal(store.at(name), store.at("base/" + name.substr(5)))) copy_changed = true;
  }
  CHECK(copy_changed);
}

TEST_CASE("base_forward is Lipschitz-sane under small input perturbations") {
  const UNetConfig cfg = tiny_cfg();
  ParamStore store;
  Xoshiro256pp rng(8);
  init_base_params(store, cfg, rng);

  Xoshiro256pp in_rng(9);
  const Tensor x = rand_tensor({3, 8, 8}, in_rng);
  Tensor x2 = x.clone();
  for (auto& v : x2.values_mut()) v += static_cast<float>(in_rng.uniform(-1e-3, 1e-3));
  const Tensor text = encode_text("a cyan circle");
  const Tensor y1 = base_forward(store, cfg, x, 9, text).eps;
  const Tensor y2 = base_forward(store, cfg, x2, 9, text).eps;
  float max_diff = 0.0f;
  for (std::size_t i = 0; i < y1.values().size(); ++i) {
    const float d = std::abs(y1.values()[i] - y2.values()[i]);
    CHECK(std::isfinite(y1.values()[i]));
    max_diff = std::max(max_diff, d);
  }
  CHECK(max_diff < 0.5f);  // small perturbation cannot blow up
}

TEST_CASE("sinusoidal embedding is bounded and t-dependent") {
  const Tensor a = sinusoidal_time_embedding(1, 32);
  const Tensor b = sinusoidal_time_embedding(2, 32);
  CHECK_FALSE(bits_equal(a, b));
  for (float v : a.values()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}
