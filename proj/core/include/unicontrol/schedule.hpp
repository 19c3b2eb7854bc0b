// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

// Linear beta schedule with cumulative products kept in 64-bit.
// 1-based step indices: beta(t), alpha(t), alpha_bar(t) for t in [1, T].
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // [T]
  std::vector<double> alpha;      // [T], 1 - beta
  std::vector<double> alpha_bar;  // [T], running product of alpha

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  // alpha_bar(0) := 1 so samplers can step to the clean image.
  double alpha_bar_at(int t) const {
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
  }
};

NoiseSchedule make_schedule(int T, double beta_min, double beta_max);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);

// DDIM x0 prediction: (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)
Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& s);

}  // namespace uc
