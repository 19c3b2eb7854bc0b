// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "unicontrol/model.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

// Indicator-routed adapter: evaluates module `task_index` only.
// cond_image [3,S,S] -> [base_channels,S,S].
Tensor adapter_forward(const Model& m, const Tensor& cond_image, int task_index);

// Per-output-bridge modulation vectors (7 by default); vector i has the
// input channel count of the i-th zero conv.
std::vector<Tensor> hyper_modulations(const Model& m, const Tensor& instr_embedding);

// Modulation vector for the input bridge Z2.
Tensor hyper_input_modulation(const Model& m, const Tensor& instr_embedding);

// 1x1 zero-initialized convolution with the kernel scaled per input channel
// by `modulation` (bias unscaled). layer_index selects an output bridge.
Tensor modulated_zero_conv(const Model& m, const Tensor& features, int layer_index,
                           const Tensor& modulation);

// Input bridge: adapter features -> image-channel residual.
Tensor modulated_input_bridge(const Model& m, const Tensor& adapter_features,
                              const Tensor& modulation);

// Full controlled forward pass with precomputed adapter features and an
// explicit instruction embedding (shared by single-task, hybrid and
// zero-shot paths).
Tensor controlled_denoise_features(const Model& m, const Tensor& x_t, int t,
                                   const Tensor& text_emb, const Tensor& adapter_features,
                                   const Tensor& instr_embedding);

// Registered-task path: routes the condition through the task's adapter and
// uses its cached instruction embedding.
Tensor controlled_denoise(const Model& m, const Tensor& x_t, int t,
                          const Tensor& text_emb, const Tensor& cond_image, int task_index);
Tensor controlled_denoise(const Model& m, const Tensor& x_t, int t,
                          const Tensor& text_emb, const Tensor& cond_image,
                          const std::string& task_key);

// Convex combination of adapter outputs; weights length K, nonnegative,
// summing to 1 within 1e-6.
Tensor blend_adapters(const Model& m, const Tensor& cond_image, std::span<const float> weights);

}  // namespace uc
