// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "unicontrol/rng.hpp"
#include "unicontrol/schedule.hpp"
#include "unicontrol/tensor.hpp"

namespace uc {

struct GuidanceConfig {
  double weight = 9.0;           // classifier-free guidance weight
  int steps = 50;                // DDIM steps
  double prompt_drop_prob = 0.30;

  void validate(int T) const;
};

// eps_uncond + w * (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

struct BatchItem {
  Tensor image;      // [3,S,S] in [-1,1]
  Tensor cond;       // [3,S,S]
  Tensor text_emb;   // [64], prompt embedding
  std::string task_key;
  int task_index = 0;
};

// Model hook for the training loss: predicts eps from the noised image.
using DenoiseFn =
    std::function<Tensor(const Tensor& x_t, int t, const Tensor& text_emb, const BatchItem& item)>;

// Single-task minibatch loss: per sample draws t uniform in [1,T] and eps
// standard normal, replaces the text embedding with the null embedding with
// probability drop_prob (task instruction and visual condition are always
// kept), and returns the mean of per-sample mse(eps, model(...)).
Tensor training_loss(const DenoiseFn& model, const std::vector<BatchItem>& batch,
                     const NoiseSchedule& schedule, double drop_prob, Xoshiro256pp& rng);

// Model hook for sampling: with_text=false selects the null text embedding.
using GuidedDenoiseFn = std::function<Tensor(const Tensor& x_t, int t, bool with_text)>;

// Deterministic (eta=0) DDIM over an evenly spaced subsequence of steps,
// from seeded standard-normal noise, two model evaluations per step through
// cfg_combine. Output clamped to [-1,1].
Tensor ddim_sample(const GuidedDenoiseFn& model, const NoiseSchedule& schedule,
                   const GuidanceConfig& guidance, std::uint64_t seed,
                   const std::vector<int>& image_shape);

// The step subsequence used by ddim_sample: index i in [0, steps] -> t.
int ddim_timestep(int i, int steps, int T);

Tensor gaussian_tensor(std::vector<int> shape, Xoshiro256pp& rng);

}  // namespace uc
