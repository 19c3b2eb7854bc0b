// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace uc {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw std::invalid_argument("make_schedule: need 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  const double denom = static_cast<double>(T > 1 ? T - 1 : 1);
  double prod = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double b = beta_min + (static_cast<double>(t - 1) / denom) * (beta_max - beta_min);
    s.beta[static_cast<std::size_t>(t - 1)] = b;
    s.alpha[static_cast<std::size_t>(t - 1)] = 1.0 - b;
    prod *= 1.0 - b;
    s.alpha_bar[static_cast<std::size_t>(t - 1)] = prod;
  }
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& s, const char* op) {
  if (t < 1 || t > s.T) {
    throw std::invalid_argument(std::string(op) + ": t=" + std::to_string(t) +
                                " out of range [1," + std::to_string(s.T) + "]");
  }
}

}  // namespace

Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
  check_t(t, s, "add_noise");
  if (x0.shape() != eps.shape()) {
    throw std::invalid_argument("add_noise: eps shape " + shape_str(eps.shape()) +
                                " does not match x0 " + shape_str(x0.shape()));
  }
  const double ab = s.alpha_bar_at(t);
  const float c0 = static_cast<float>(std::sqrt(ab));
  const float c1 = static_cast<float>(std::sqrt(1.0 - ab));
  Tensor out = Tensor::zeros(x0.shape());
  auto dst = out.values_mut();
  const auto a = x0.values();
  const auto e = eps.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = c0 * a[i] + c1 * e[i];
  return out;
}

Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& s) {
  check_t(t, s, "predict_x0");
  if (x_t.shape() != eps_hat.shape()) {
    throw std::invalid_argument("predict_x0: shape mismatch " + shape_str(x_t.shape()) +
                                " vs " + shape_str(eps_hat.shape()));
  }
  const double ab = s.alpha_bar_at(t);
  const float inv = static_cast<float>(1.0 / std::sqrt(ab));
  const float c1 = static_cast<float>(std::sqrt(1.0 - ab));
  Tensor out = Tensor::zeros(x_t.shape());
  auto dst = out.values_mut();
  const auto xv = x_t.values();
  const auto ev = eps_hat.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (xv[i] - c1 * ev[i]) * inv;
  return out;
}

}  // namespace uc
