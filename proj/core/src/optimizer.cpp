// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace uc {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opt) : opt_(opt) {
  slots_.reserve(params.size());
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) {
      throw std::invalid_argument("AdamW: parameter " + name + " is frozen");
    }
    Slot s;
    s.name = std::move(name);
    s.param = std::move(p);
    s.m.assign(static_cast<std::size_t>(s.param.numel()), 0.0f);
    s.v.assign(static_cast<std::size_t>(s.param.numel()), 0.0f);
    slots_.push_back(std::move(s));
  }
}

void AdamW::step(const std::function<bool(const std::string&)>& update) {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(opt_.beta1), t_);
  const double bc2 = 1.0 - std::pow(static_cast<double>(opt_.beta2), t_);
  for (auto& s : slots_) {
    if (update && !update(s.name)) continue;
    auto vals = s.param.values_mut();
    const auto grad = s.param.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const float g = grad[i];
      s.m[i] = opt_.beta1 * s.m[i] + (1.0f - opt_.beta1) * g;
      s.v[i] = opt_.beta2 * s.v[i] + (1.0f - opt_.beta2) * g * g;
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      const double adam = m_hat / (std::sqrt(v_hat) + opt_.eps);
      vals[i] -= opt_.lr * static_cast<float>(adam + opt_.weight_decay * vals[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace uc
