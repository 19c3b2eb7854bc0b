// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "unicontrol/ops.hpp"
#include "unicontrol/tasks.hpp"

namespace uc {

void GuidanceConfig::validate(int T) const {
  if (weight < 0.0) throw std::invalid_argument("guidance weight must be >= 0");
  if (steps < 1 || steps > T) {
    throw std::invalid_argument("guidance steps " + std::to_string(steps) +
                                " out of range [1," + std::to_string(T) + "]");
  }
  if (prompt_drop_prob < 0.0 || prompt_drop_prob > 1.0) {
    throw std::invalid_argument("prompt drop probability must be in [0,1]");
  }
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  if (eps_cond.shape() != eps_uncond.shape()) {
    throw std::invalid_argument("cfg_combine: shape mismatch " + shape_str(eps_cond.shape()) +
                                " vs " + shape_str(eps_uncond.shape()));
  }
  // The formula reduces exactly at the boundary weights.
  if (w == 1.0) return eps_cond.clone();
  if (w == 0.0) return eps_uncond.clone();
  Tensor out = Tensor::zeros(eps_cond.shape());
  auto dst = out.values_mut();
  const auto c = eps_cond.values();
  const auto u = eps_uncond.values();
  const float wf = static_cast<float>(w);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = u[i] + wf * (c[i] - u[i]);
  return out;
}

Tensor gaussian_tensor(std::vector<int> shape, Xoshiro256pp& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values_mut()) v = static_cast<float>(rng.normal());
  return t;
}

Tensor training_loss(const DenoiseFn& model, const std::vector<BatchItem>& batch,
                     const NoiseSchedule& schedule, double drop_prob, Xoshiro256pp& rng) {
  if (batch.empty()) throw std::invalid_argument("training_loss: empty batch");
  const std::string& task = batch.front().task_key;
  for (const auto& item : batch) {
    if (item.task_key != task) {
      throw std::invalid_argument("training_loss: mixed-task batch (" + task + " vs " +
                                  item.task_key + "); the schedule samples one task per minibatch");
    }
  }
  Tensor total;
  const Tensor inv_n = Tensor::scalar(1.0f / static_cast<float>(batch.size()));
  for (const auto& item : batch) {
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.T)));
    const Tensor eps = gaussian_tensor(item.image.shape(), rng);
    const bool drop = rng.uniform() < drop_prob;
    const Tensor x_t = add_noise(item.image, t, eps, schedule);
    const Tensor text = drop ? null_text_embedding() : item.text_emb;
    const Tensor eps_hat = model(x_t, t, text, item);
    const Tensor item_loss = mse(eps_hat, eps);
    total = total.defined() ? add(total, item_loss) : item_loss;
  }
  return mul(total, inv_n);
}

int ddim_timestep(int i, int steps, int T) {
  // Evenly spaced, with ddim_timestep(steps) == T and ddim_timestep(0) == 0.
  return static_cast<int>((static_cast<std::int64_t>(i) * T) / steps);
}

Tensor ddim_sample(const GuidedDenoiseFn& model, const NoiseSchedule& schedule,
                   const GuidanceConfig& guidance, std::uint64_t seed,
                   const std::vector<int>& image_shape) {
  guidance.validate(schedule.T);
  Xoshiro256pp rng(seed);
  Tensor x = gaussian_tensor(image_shape, rng);
  for (int i = guidance.steps; i >= 1; --i) {
    const int t = ddim_timestep(i, guidance.steps, schedule.T);
    const int t_prev = ddim_timestep(i - 1, guidance.steps, schedule.T);
    const Tensor eps_cond = model(x, t, true);
    const Tensor eps_uncond = model(x, t, false);
    const Tensor eps = cfg_combine(eps_cond, eps_uncond, guidance.weight);
    const Tensor x0 = predict_x0(x, t, eps, schedule);
    const double ab_prev = schedule.alpha_bar_at(t_prev);
    const float c0 = static_cast<float>(std::sqrt(ab_prev));
    const float c1 = static_cast<float>(std::sqrt(1.0 - ab_prev));
    Tensor next = Tensor::zeros(image_shape);
    auto dst = next.values_mut();
    const auto xv = x0.values();
    const auto ev = eps.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = c0 * xv[k] + c1 * ev[k];
    x = next;
  }
  for (auto& v : x.values_mut()) v = std::min(1.0f, std::max(-1.0f, v));
  return x;
}

}  // namespace uc
