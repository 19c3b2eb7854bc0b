// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/params.hpp"

#include <stdexcept>

namespace uc {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  auto [it, inserted] = index_.emplace(name, std::move(t));
  if (!inserted) throw std::invalid_argument("ParamStore: duplicate name " + name);
  order_.push_back(name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown tensor " + name);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown tensor " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  }
  return out;
}

std::int64_t ParamStore::param_count(const std::string& prefix) const {
  std::int64_t total = 0;
  for (const auto& n : order_) {
    if (n.rfind(prefix, 0) == 0) total += at(n).numel();
  }
  return total;
}

}  // namespace uc
