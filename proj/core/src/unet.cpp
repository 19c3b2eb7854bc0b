// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "unicontrol/ops.hpp"

namespace uc {

std::vector<int> UNetConfig::injection_channels() const {
  std::vector<int> out;
  out.push_back(channels(0));  // stem
  for (int l = 0; l < levels(); ++l) {
    for (int b = 0; b < blocks_per_level; ++b) out.push_back(channels(l));
    if (l + 1 < levels()) out.push_back(channels(l));  // downsample output
  }
  out.push_back(channels(levels() - 1));  // middle
  return out;
}

void UNetConfig::validate() const {
  if (channel_mults.empty()) throw std::invalid_argument("UNetConfig: channel_mults empty");
  if (base_channels < 1 || in_channels < 1 || blocks_per_level < 1) {
    throw std::invalid_argument("UNetConfig: channel/block counts must be positive");
  }
  if (time_embed_dim < 4 || time_embed_dim % 2) {
    throw std::invalid_argument("UNetConfig: time_embed_dim must be even and >= 4");
  }
  const int down = 1 << (levels() - 1);
  if (image_size % down) {
    throw std::invalid_argument("UNetConfig: image_size " + std::to_string(image_size) +
                                " not divisible by " + std::to_string(down));
  }
}

Tensor sinusoidal_time_embedding(int t, int dim) {
  const int half = dim / 2;
  Tensor out = Tensor::zeros({dim});
  auto v = out.values_mut();
  const double scale = std::log(10000.0) / static_cast<double>(half > 1 ? half - 1 : 1);
  for (int i = 0; i < half; ++i) {
    const double f = std::exp(-scale * i) * static_cast<double>(t);
    v[static_cast<std::size_t>(i)] = static_cast<float>(std::sin(f));
    v[static_cast<std::size_t>(half + i)] = static_cast<float>(std::cos(f));
  }
  return out;
}

void fill_trunc_normal(Tensor& t, Xoshiro256pp& rng, float std_dev) {
  for (auto& v : t.values_mut()) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    v = static_cast<float>(z * std_dev);
  }
}

namespace {

Tensor make_weight(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  fill_trunc_normal(t, rng);
  return t;
}

void add_block_params(ParamStore& store, const std::string& name, int cin, int cout,
                      int time_dim, Xoshiro256pp& rng) {
  store.add(name + "/norm/g", Tensor::ones({cin}));
  store.add(name + "/norm/b", Tensor::zeros({cin}));
  store.add(name + "/conv/w", make_weight({cout, cin, 3, 3}, rng));
  store.add(name + "/conv/b", Tensor::zeros({cout}));
  store.add(name + "/time/w", make_weight({cout, time_dim}, rng));
  store.add(name + "/time/b", Tensor::zeros({cout}));
  if (cin != cout) {
    store.add(name + "/skip/w", make_weight({cout, cin, 1, 1}, rng));
    store.add(name + "/skip/b", Tensor::zeros({cout}));
  }
}

// Residual block: x -> conv3x3(silu(norm(x))) + time, plus identity or 1x1
// projection shortcut.
Tensor block_forward(const ParamStore& store, const std::string& name,
                     const Tensor& x, const Tensor& temb) {
  Tensor h = channel_norm(x, store.at(name + "/norm/g"), store.at(name + "/norm/b"));
  h = silu(h);
  h = conv2d(h, store.at(name + "/conv/w"), store.at(name + "/conv/b"), 1, 1);
  const Tensor tv = linear(silu(temb), store.at(name + "/time/w"), store.at(name + "/time/b"));
  h = add(h, tv);
  if (store.contains(name + "/skip/w")) {
    return add(h, conv2d(x, store.at(name + "/skip/w"), store.at(name + "/skip/b")));
  }
  return add(h, x);
}

struct BlockPlan {
  std::string name;
  int cin, cout;
};

std::vector<BlockPlan> encoder_blocks(const UNetConfig& cfg) {
  std::vector<BlockPlan> plan;
  int prev = cfg.channels(0);
  for (int l = 0; l < cfg.levels(); ++l) {
    for (int b = 0; b < cfg.blocks_per_level; ++b) {
      plan.push_back({"enc" + std::to_string(l) + "_" + std::to_string(b),
                      b == 0 ? prev : cfg.channels(l), cfg.channels(l)});
    }
    prev = cfg.channels(l);
  }
  return plan;
}

std::vector<BlockPlan> decoder_blocks(const UNetConfig& cfg) {
  std::vector<BlockPlan> plan;  // in forward (decode) order: top level first
  for (int l = cfg.levels() - 1; l >= 0; --l) {
    const int cout_level = l > 0 ? cfg.channels(l - 1) : cfg.channels(0);
    for (int b = cfg.blocks_per_level - 1; b >= 0; --b) {
      plan.push_back({"dec" + std::to_string(l) + "_" + std::to_string(b),
                      cfg.channels(l), b == 0 ? cout_level : cfg.channels(l)});
    }
  }
  return plan;
}

}  // namespace

bool is_encoder_middle_param(const std::string& rel) {
  return rel.rfind("stem/", 0) == 0 || rel.rfind("enc", 0) == 0 || rel.rfind("mid/", 0) == 0;
}

void init_base_params(ParamStore& store, const UNetConfig& cfg, Xoshiro256pp& rng) {
  cfg.validate();
  const int D = cfg.time_embed_dim;
  store.add("base/time/mlp0/w", make_weight({D, D}, rng));
  store.add("base/time/mlp0/b", Tensor::zeros({D}));
  store.add("base/time/mlp1/w", make_weight({D, D}, rng));
  store.add("base/time/mlp1/b", Tensor::zeros({D}));
  store.add("base/text/proj/w", make_weight({D, cfg.text_embed_dim}, rng));
  store.add("base/text/proj/b", Tensor::zeros({D}));

  store.add("base/stem/w", make_weight({cfg.channels(0), cfg.in_channels, 3, 3}, rng));
  store.add("base/stem/b", Tensor::zeros({cfg.channels(0)}));
  for (const auto& b : encoder_blocks(cfg)) {
    add_block_params(store, "base/" + b.name, b.cin, b.cout, D, rng);
  }
  const int top = cfg.channels(cfg.levels() - 1);
  add_block_params(store, "base/mid", top, top, D, rng);
  for (const auto& b : decoder_blocks(cfg)) {
    add_block_params(store, "base/" + b.name, b.cin, b.cout, D, rng);
  }
  store.add("base/head/norm/g", Tensor::ones({cfg.channels(0)}));
  store.add("base/head/norm/b", Tensor::zeros({cfg.channels(0)}));
  store.add("base/head/conv/w", make_weight({cfg.in_channels, cfg.channels(0), 3, 3}, rng));
  store.add("base/head/conv/b", Tensor::zeros({cfg.in_channels}));
}

void clone_trainable_copy(ParamStore& store, const UNetConfig& cfg) {
  (void)cfg;
  for (const auto& name : store.names_with_prefix("base/")) {
    const std::string rel = name.substr(5);
    if (!is_encoder_middle_param(rel)) continue;
    Tensor copy = store.at(name).clone();
    copy.set_requires_grad(true);
    store.add("ctrl/" + rel, std::move(copy));
  }
}

Tensor time_text_embedding(const ParamStore& store, const std::string& prefix,
                           const UNetConfig& cfg, int t, const Tensor& text_emb) {
  if (t < 1) throw std::invalid_argument("time step must be >= 1, got " + std::to_string(t));
  if (text_emb.rank() != 1 || text_emb.dim(0) != cfg.text_embed_dim) {
    throw std::invalid_argument("text embedding must be [" + std::to_string(cfg.text_embed_dim) +
                                "], got " + shape_str(text_emb.shape()));
  }
  Tensor h = sinusoidal_time_embedding(t, cfg.time_embed_dim);
  h = linear(h, store.at(prefix + "time/mlp0/w"), store.at(prefix + "time/mlp0/b"));
  h = silu(h);
  h = linear(h, store.at(prefix + "time/mlp1/w"), store.at(prefix + "time/mlp1/b"));
  const Tensor tx = linear(text_emb, store.at(prefix + "text/proj/w"), store.at(prefix + "text/proj/b"));
  return add(h, tx);
}

UNetFeatures unet_encode(const ParamStore& store, const std::string& prefix,
                         const UNetConfig& cfg, const Tensor& x, const Tensor& temb) {
  if (x.rank() != 3 || x.dim(0) != cfg.in_channels || x.dim(1) != cfg.image_size ||
      x.dim(2) != cfg.image_size) {
    throw std::invalid_argument("unet input must be [" + std::to_string(cfg.in_channels) + "," +
                                std::to_string(cfg.image_size) + "," + std::to_string(cfg.image_size) +
                                "], got " + shape_str(x.shape()));
  }
  UNetFeatures f;
  Tensor h = conv2d(x, store.at(prefix + "stem/w"), store.at(prefix + "stem/b"), 1, 1);
  f.injections.push_back(h);
  for (int l = 0; l < cfg.levels(); ++l) {
    for (int b = 0; b < cfg.blocks_per_level; ++b) {
      h = block_forward(store, prefix + "enc" + std::to_string(l) + "_" + std::to_string(b), h, temb);
      f.injections.push_back(h);
    }
    if (l + 1 < cfg.levels()) {
      h = avgpool2x(h);
      f.injections.push_back(h);
    }
  }
  h = block_forward(store, prefix + "mid", h, temb);
  f.injections.push_back(h);
  return f;
}

Tensor unet_decode(const ParamStore& store, const std::string& prefix,
                   const UNetConfig& cfg, const std::vector<Tensor>& injections,
                   const Tensor& temb) {
  const std::size_t expected = static_cast<std::size_t>(cfg.injection_count());
  if (injections.size() != expected) {
    throw std::invalid_argument("unet_decode: expected " + std::to_string(expected) +
                                " injection features, got " + std::to_string(injections.size()));
  }
  std::size_t top = injections.size() - 1;  // middle feature
  Tensor h = injections[top];
  for (int l = cfg.levels() - 1; l >= 0; --l) {
    for (int b = cfg.blocks_per_level - 1; b >= 0; --b) {
      h = add(h, injections[--top]);
      h = block_forward(store, prefix + "dec" + std::to_string(l) + "_" + std::to_string(b), h, temb);
    }
    if (l > 0) {
      h = add(h, injections[--top]);
      h = upsample_nearest2x(h);
    }
  }
  h = add(h, injections[--top]);  // stem skip
  h = channel_norm(h, store.at(prefix + "head/norm/g"), store.at(prefix + "head/norm/b"));
  h = silu(h);
  return conv2d(h, store.at(prefix + "head/conv/w"), store.at(prefix + "head/conv/b"), 1, 1);
}

BaseForwardResult base_forward(const ParamStore& store, const UNetConfig& cfg,
                               const Tensor& x_t, int t, const Tensor& text_emb) {
  const Tensor temb = time_text_embedding(store, "base/", cfg, t, text_emb);
  UNetFeatures f = unet_encode(store, "base/", cfg, x_t, temb);
  BaseForwardResult out;
  out.features = f.injections;
  out.eps = unet_decode(store, "base/", cfg, f.injections, temb);
  return out;
}

}  // namespace uc
