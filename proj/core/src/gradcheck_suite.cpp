// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/gradcheck_suite.hpp"

#include "unicontrol/control.hpp"
#include "unicontrol/ops.hpp"

namespace uc {
namespace {

Tensor rand_param(std::vector<int> shape, Xoshiro256pp& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(lo, hi));
  t.set_requires_grad(true);
  return t;
}

Tensor rand_const(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

BuiltGraph conv_builder(Xoshiro256pp& rng) {
  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  Tensor x = rand_param({3, 6, 6}, rng);
  Tensor w1 = rand_param({4, 3, 3, 3}, rng);
  Tensor b1 = rand_param({4}, rng);
  Tensor w2 = rand_param({2, 4, 3, 3}, rng);
  Tensor b2 = rand_param({2}, rng);
  Tensor target = rand_const({2, 3, 3}, rng);
  {
    TapeScope scope(*g.tape);
    Tensor h = conv2d(x, w1, b1, 1, 1);
    h = silu(h);
    h = conv2d(h, w2, b2, 2, 1);
    g.loss = mse(h, target);
  }
  g.params = {{"x", x}, {"conv1/w", w1}, {"conv1/b", b1}, {"conv2/w", w2}, {"conv2/b", b2}};
  return g;
}

BuiltGraph linear_builder(Xoshiro256pp& rng) {
  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  Tensor x = rand_param({6}, rng);
  Tensor w = rand_param({5, 6}, rng);
  Tensor b = rand_param({5}, rng);
  Tensor target = rand_const({5}, rng);
  {
    TapeScope scope(*g.tape);
    g.loss = mse(silu(linear(x, w, b)), target);
  }
  g.params = {{"x", x}, {"w", w}, {"b", b}};
  return g;
}

BuiltGraph norm_builder(Xoshiro256pp& rng) {
  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  Tensor x = rand_param({4, 5, 5}, rng);
  Tensor gamma = rand_param({4}, rng, 0.5f, 1.5f);
  Tensor beta = rand_param({4}, rng, -0.5f, 0.5f);
  Tensor target = rand_const({4, 5, 5}, rng);
  {
    TapeScope scope(*g.tape);
    g.loss = mse(channel_norm(x, gamma, beta), target);
  }
  g.params = {{"x", x}, {"gamma", gamma}, {"beta", beta}};
  return g;
}

BuiltGraph elementwise_builder(Xoshiro256pp& rng) {
  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  Tensor a = rand_param({3, 4, 4}, rng);
  Tensor b = rand_param({3, 4, 4}, rng);
  Tensor cvec = rand_param({3}, rng);
  Tensor s = rand_param({1}, rng);
  Tensor target = rand_const({3, 4, 4}, rng);
  {
    TapeScope scope(*g.tape);
    Tensor h = mul(add(a, b), cvec);     // broadcast mul over channels
    h = add(h, cvec);                    // broadcast add
    h = mul(h, s);                       // scalar mul
    h = add(h, s);                       // scalar add
    h = mul(h, b);                       // same-shape mul
    g.loss = mse(h, target);
  }
  g.params = {{"a", a}, {"b", b}, {"cvec", cvec}, {"s", s}};
  return g;
}

BuiltGraph resample_builder(Xoshiro256pp& rng) {
  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  Tensor x = rand_param({2, 4, 4}, rng);
  Tensor target = rand_const({2, 4, 4}, rng);
  {
    TapeScope scope(*g.tape);
    Tensor h = upsample_nearest2x(avgpool2x(x));
    h = silu(h);
    g.loss = mse(h, target);
  }
  g.params = {{"x", x}};
  return g;
}

UNetConfig tiny_unet() {
  UNetConfig u;
  u.image_size = 8;
  u.base_channels = 4;
  u.channel_mults = {1, 2, 4};
  u.time_embed_dim = 32;
  u.text_embed_dim = kTextEmbedDim;
  return u;
}

BuiltGraph tiny_model_builder_impl(Xoshiro256pp& rng) {
  ControlConfig cc;
  cc.adapter_hidden = 6;
  Model model = init_model(tiny_unet(), cc, TaskRegistry::standard(), rng.next());
  // Nudge every trainable tensor (zero convs included) off its
  // initialization so all bridge paths carry gradient.
  for (const auto& name : trainable_names(model)) {
    Tensor& t = model.params.at(name);
    for (auto& v : t.values_mut()) v += static_cast<float>(rng.uniform(-0.05, 0.05));
  }

  BuiltGraph g;
  g.tape = std::make_shared<Tape>();
  const Tensor x_t = rand_const({3, 8, 8}, rng);
  const Tensor text = encode_text("a red circle on a gray background");
  const Tensor cond = rand_const({3, 8, 8}, rng);
  Tensor target = rand_const({3, 8, 8}, rng);
  {
    TapeScope scope(*g.tape);
    const Tensor eps = controlled_denoise(model, x_t, 3, text, cond, 1);
    g.loss = mse(eps, target);
  }
  // Tensor handles keep the parameter storage alive past the Model.
  for (const auto& name : trainable_names(model)) {
    g.params.emplace_back(name, model.params.at(name));
  }
  return g;
}

}  // namespace

GraphBuilder tiny_controlled_denoise_builder() {
  return [](Xoshiro256pp& rng) { return tiny_model_builder_impl(rng); };
}

std::vector<std::pair<std::string, GradCheckReport>> run_standard_gradchecks(std::uint64_t seed) {
  std::vector<std::pair<std::string, GradCheckReport>> out;
  out.emplace_back("conv2d", gradcheck(conv_builder, seed));
  out.emplace_back("linear", gradcheck(linear_builder, seed + 1));
  out.emplace_back("channel_norm", gradcheck(norm_builder, seed + 2));
  out.emplace_back("add/mul", gradcheck(elementwise_builder, seed + 3));
  out.emplace_back("pool/upsample", gradcheck(resample_builder, seed + 4));
  // The composite graph has enough curvature (channel stats over few
  // pixels) that the h^2 truncation term of the h=1e-3 step dominates the
  // comparison; a finer step keeps the check about the gradients.
  out.emplace_back("controlled_denoise (tiny)",
                   gradcheck(tiny_controlled_denoise_builder(), seed + 5, 1e-4));
  return out;
}

}  // namespace uc
