// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/control.hpp"

#include <cmath>
#include <stdexcept>

#include "unicontrol/ops.hpp"

namespace uc {

Tensor adapter_forward(const Model& m, const Tensor& cond_image, int task_index) {
  if (task_index < 0 || task_index >= m.num_tasks()) {
    throw std::out_of_range("adapter_forward: task index " + std::to_string(task_index) +
                            " out of range [0," + std::to_string(m.num_tasks()) + ")");
  }
  if (cond_image.rank() != 3 || cond_image.dim(0) != m.unet.in_channels) {
    throw std::invalid_argument("adapter_forward: condition must be [" +
                                std::to_string(m.unet.in_channels) + ",S,S], got " +
                                shape_str(cond_image.shape()));
  }
  const std::string base = "adapter" + std::to_string(task_index);
  const int pad = (m.control.adapter_kernel - 1) / 2;
  Tensor h = cond_image;
  for (int d = 0; d < m.control.adapter_depth; ++d) {
    const std::string conv = base + "/conv" + std::to_string(d);
    h = conv2d(h, m.params.at(conv + "/w"), m.params.at(conv + "/b"), 1, pad);
    h = silu(h);
  }
  return h;
}

namespace {

Tensor check_instr(const Model& m, const Tensor& instr_embedding) {
  if (instr_embedding.rank() != 1 || instr_embedding.dim(0) != kTextEmbedDim) {
    throw std::invalid_argument("instruction embedding must be [" + std::to_string(kTextEmbedDim) +
                                "], got " + shape_str(instr_embedding.shape()));
  }
  return instr_embedding;
}

}  // namespace

std::vector<Tensor> hyper_modulations(const Model& m, const Tensor& instr_embedding) {
  check_instr(m, instr_embedding);
  std::vector<Tensor> mods;
  const int n = m.unet.injection_count();
  mods.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::string head = "hyper/out" + std::to_string(i);
    mods.push_back(linear(instr_embedding, m.params.at(head + "/w"), m.params.at(head + "/b")));
  }
  return mods;
}

Tensor hyper_input_modulation(const Model& m, const Tensor& instr_embedding) {
  check_instr(m, instr_embedding);
  return linear(instr_embedding, m.params.at("hyper/in/w"), m.params.at("hyper/in/b"));
}

namespace {

// conv(x, W * diag(mod)) == conv(x * mod, W): scaling the kernel slices per
// input channel is applied to the features, so gradients reach the
// modulation vector through the same product.
Tensor apply_zero_conv(const Model& m, const std::string& name, const Tensor& features,
                       const Tensor& modulation) {
  if (modulation.rank() != 1 || modulation.dim(0) != features.dim(0)) {
    throw std::invalid_argument("modulation length " + shape_str(modulation.shape()) +
                                " does not match feature channels " + shape_str(features.shape()));
  }
  const Tensor scaled = mul(features, modulation);
  return conv2d(scaled, m.params.at(name + "/w"), m.params.at(name + "/b"));
}

}  // namespace

Tensor modulated_zero_conv(const Model& m, const Tensor& features, int layer_index,
                           const Tensor& modulation) {
  const int n = m.unet.injection_count();
  if (layer_index < 0 || layer_index >= n) {
    throw std::out_of_range("zero-conv layer index " + std::to_string(layer_index) +
                            " out of range [0," + std::to_string(n) + ")");
  }
  return apply_zero_conv(m, "zero/out" + std::to_string(layer_index), features, modulation);
}

Tensor modulated_input_bridge(const Model& m, const Tensor& adapter_features,
                              const Tensor& modulation) {
  return apply_zero_conv(m, "zero/in", adapter_features, modulation);
}

Tensor controlled_denoise_features(const Model& m, const Tensor& x_t, int t,
                                   const Tensor& text_emb, const Tensor& adapter_features,
                                   const Tensor& instr_embedding) {
  const Tensor temb = time_text_embedding(m.params, "base/", m.unet, t, text_emb);
  const UNetFeatures base_f = unet_encode(m.params, "base/", m.unet, x_t, temb);

  const Tensor m_in = hyper_input_modulation(m, instr_embedding);
  const Tensor cond_residual = modulated_input_bridge(m, adapter_features, m_in);
  const Tensor gx = add(x_t, cond_residual);
  const UNetFeatures ctrl_f = unet_encode(m.params, "ctrl/", m.unet, gx, temb);

  const std::vector<Tensor> mods = hyper_modulations(m, instr_embedding);
  std::vector<Tensor> injected;
  injected.reserve(base_f.injections.size());
  for (std::size_t i = 0; i < base_f.injections.size(); ++i) {
    const Tensor bridge = modulated_zero_conv(m, ctrl_f.injections[i], static_cast<int>(i), mods[i]);
    injected.push_back(add(base_f.injections[i], bridge));
  }
  return unet_decode(m.params, "base/", m.unet, injected, temb);
}

Tensor controlled_denoise(const Model& m, const Tensor& x_t, int t,
                          const Tensor& text_emb, const Tensor& cond_image, int task_index) {
  if (task_index < 0 || task_index >= m.num_tasks()) {
    throw std::out_of_range("controlled_denoise: unknown task index " + std::to_string(task_index));
  }
  const Tensor feat = adapter_forward(m, cond_image, task_index);
  return controlled_denoise_features(m, x_t, t, text_emb, feat,
                                     m.instruction_embeddings[static_cast<std::size_t>(task_index)]);
}

Tensor controlled_denoise(const Model& m, const Tensor& x_t, int t,
                          const Tensor& text_emb, const Tensor& cond_image,
                          const std::string& task_key) {
  return controlled_denoise(m, x_t, t, text_emb, cond_image, m.registry.index_of(task_key));
}

Tensor blend_adapters(const Model& m, const Tensor& cond_image, std::span<const float> weights) {
  if (static_cast<int>(weights.size()) != m.num_tasks()) {
    throw std::invalid_argument("blend_adapters: expected " + std::to_string(m.num_tasks()) +
                                " weights, got " + std::to_string(weights.size()));
  }
  double sum = 0.0;
  for (float w : weights) {
    if (w < 0.0f) throw std::invalid_argument("blend_adapters: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("blend_adapters: weights sum to " + std::to_string(sum) +
                                ", expected 1");
  }
  Tensor out;
  for (int k = 0; k < m.num_tasks(); ++k) {
    const Tensor term = mul(adapter_forward(m, cond_image, k),
                            Tensor::scalar(weights[static_cast<std::size_t>(k)]));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

}  // namespace uc
