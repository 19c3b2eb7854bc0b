// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/model.hpp"

#include <cmath>
#include <stdexcept>

namespace uc {

void ControlConfig::validate() const {
  if (adapter_hidden < 1) throw std::invalid_argument("ControlConfig: adapter_hidden must be positive");
  if (adapter_kernel < 1 || adapter_kernel % 2 == 0) {
    throw std::invalid_argument("ControlConfig: adapter_kernel must be odd and positive");
  }
  if (adapter_depth < 2 || adapter_depth > 3) {
    throw std::invalid_argument("ControlConfig: adapter_depth must be 2 or 3");
  }
}

Model init_model(const UNetConfig& unet, const ControlConfig& control,
                 const TaskRegistry& registry, std::uint64_t seed) {
  unet.validate();
  control.validate();
  if (unet.text_embed_dim != kTextEmbedDim) {
    throw std::invalid_argument("text_embed_dim must match the text encoder (" +
                                std::to_string(kTextEmbedDim) + ")");
  }
  Model m;
  m.unet = unet;
  m.control = control;
  m.registry = registry;

  Xoshiro256pp rng(seed);
  init_base_params(m.params, unet, rng);
  clone_trainable_copy(m.params, unet);

  // MOE-style adapter: one small convolution stack per task. Variance-
  // preserving init so the condition features carry signal from step 0;
  // the zero-init bridges still gate their effect on the output.
  const int pad_channels[] = {unet.in_channels, control.adapter_hidden, control.adapter_hidden};
  for (int k = 0; k < registry.size(); ++k) {
    const std::string base = "adapter" + std::to_string(k);
    for (int d = 0; d < control.adapter_depth; ++d) {
      const int cin = pad_channels[d];
      const int cout = (d + 1 == control.adapter_depth) ? unet.base_channels : control.adapter_hidden;
      Tensor w = Tensor::zeros({cout, cin, control.adapter_kernel, control.adapter_kernel});
      const float fan_in = static_cast<float>(cin * control.adapter_kernel * control.adapter_kernel);
      fill_trunc_normal(w, rng, std::sqrt(2.0f / fan_in));
      w.set_requires_grad(true);
      m.params.add(base + "/conv" + std::to_string(d) + "/w", std::move(w));
      Tensor b = Tensor::zeros({cout});
      b.set_requires_grad(true);
      m.params.add(base + "/conv" + std::to_string(d) + "/b", std::move(b));
    }
  }

  // Zero convolutions: exactly zero weights and biases.
  const auto inj = unet.injection_channels();
  {
    Tensor w = Tensor::zeros({unet.in_channels, unet.base_channels, 1, 1});
    w.set_requires_grad(true);
    m.params.add("zero/in/w", std::move(w));
    Tensor b = Tensor::zeros({unet.in_channels});
    b.set_requires_grad(true);
    m.params.add("zero/in/b", std::move(b));
  }
  for (std::size_t i = 0; i < inj.size(); ++i) {
    const int c = inj[i];
    Tensor w = Tensor::zeros({c, c, 1, 1});
    w.set_requires_grad(true);
    m.params.add("zero/out" + std::to_string(i) + "/w", std::move(w));
    Tensor b = Tensor::zeros({c});
    b.set_requires_grad(true);
    m.params.add("zero/out" + std::to_string(i) + "/b", std::move(b));
  }

  // Task-aware hypernet: per-bridge projection heads, bias 1 so training
  // starts at the unmodulated behavior.
  for (std::size_t i = 0; i < inj.size(); ++i) {
    Tensor w = Tensor::zeros({inj[i], kTextEmbedDim});
    fill_trunc_normal(w, rng);
    w.set_requires_grad(true);
    m.params.add("hyper/out" + std::to_string(i) + "/w", std::move(w));
    Tensor b = Tensor::ones({inj[i]});
    b.set_requires_grad(true);
    m.params.add("hyper/out" + std::to_string(i) + "/b", std::move(b));
  }
  {
    Tensor w = Tensor::zeros({unet.base_channels, kTextEmbedDim});
    fill_trunc_normal(w, rng);
    w.set_requires_grad(true);
    m.params.add("hyper/in/w", std::move(w));
    Tensor b = Tensor::ones({unet.base_channels});
    b.set_requires_grad(true);
    m.params.add("hyper/in/b", std::move(b));
  }

  for (const auto& spec : registry.specs()) {
    m.instruction_embeddings.push_back(encode_text(spec.instruction));
  }
  return m;
}

std::vector<std::string> trainable_names(const Model& m) {
  std::vector<std::string> out;
  for (const auto& n : m.params.names()) {
    if (m.params.at(n).requires_grad()) out.push_back(n);
  }
  return out;
}

}  // namespace uc
