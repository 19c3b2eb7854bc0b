// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "unicontrol/params.hpp"
#include "unicontrol/rng.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

// Pixel-space U-Net with additive skip connections. One residual block per
// level by default; time conditioning is a sinusoidal embedding through a
// 2-layer projection, text conditioning adds a projected embedding to it.
struct UNetConfig {
  int image_size = 32;
  int in_channels = 3;
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2, 4};
  int time_embed_dim = 128;
  int text_embed_dim = 64;
  int blocks_per_level = 1;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  int channels(int level) const { return base_channels * channel_mults[static_cast<std::size_t>(level)]; }
  // Channel count of each injection point: encoder skips in order, then the
  // middle feature. 7 entries for the default config.
  std::vector<int> injection_channels() const;
  int injection_count() const { return static_cast<int>(injection_channels().size()); }
  void validate() const;
};

Tensor sinusoidal_time_embedding(int t, int dim);

// Truncated normal (std 0.02, redraw beyond 2 std) used for all weights.
void fill_trunc_normal(Tensor& t, Xoshiro256pp& rng, float std_dev = 0.02f);

// Creates the frozen base parameters under "base/".
void init_base_params(ParamStore& store, const UNetConfig& cfg, Xoshiro256pp& rng);

// Clones the encoder and middle blocks of "base/" into trainable tensors
// under "ctrl/". Decoder, head and the time/text projections stay shared.
void clone_trainable_copy(ParamStore& store, const UNetConfig& cfg);

// True for relative parameter names that belong to the encoder+middle
// subset ("stem/...", "encL_B/...", "mid/...").
bool is_encoder_middle_param(const std::string& relative_name);

// temb = mlp(sinusoidal(t)) + proj(text_emb); parameters under prefix.
Tensor time_text_embedding(const ParamStore& store, const std::string& prefix,
                           const UNetConfig& cfg, int t, const Tensor& text_emb);

struct UNetFeatures {
  // Encoder skips in order, middle feature last.
  std::vector<Tensor> injections;
};

UNetFeatures unet_encode(const ParamStore& store, const std::string& prefix,
                         const UNetConfig& cfg, const Tensor& x, const Tensor& temb);

Tensor unet_decode(const ParamStore& store, const std::string& prefix,
                   const UNetConfig& cfg, const std::vector<Tensor>& injections,
                   const Tensor& temb);

struct BaseForwardResult {
  Tensor eps;
  std::vector<Tensor> features;  // the 7 injection-point features
};

// Frozen-branch forward pass: eps prediction plus the per-injection-point
// feature maps.
BaseForwardResult base_forward(const ParamStore& store, const UNetConfig& cfg,
                               const Tensor& x_t, int t, const Tensor& text_emb);

}  // namespace uc
