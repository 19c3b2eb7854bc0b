// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

// Named tensor map with stable insertion order. Frozen state is the
// inverse of the tensor's requires_grad flag.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::int64_t param_count(const std::string& prefix = "") const;

  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> index_;
};

}  // namespace uc
