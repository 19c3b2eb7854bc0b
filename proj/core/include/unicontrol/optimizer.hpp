// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

// AdamW with bias-corrected moments and decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd * theta)
class AdamW {
 public:
  struct Options {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
  };

  AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opt);

  // One update over all parameters whose name passes `update`; nullptr means
  // update everything. The moment step count advances once per call.
  void step(const std::function<bool(const std::string&)>& update = nullptr);
  void zero_grad();

  const Options& options() const { return opt_; }
  int step_count() const { return t_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  Options opt_;
  int t_ = 0;
};

}  // namespace uc
