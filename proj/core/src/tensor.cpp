// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/tensor.hpp"

#include <cstring>
#include <stdexcept>

namespace uc {

std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(std::vector<int> shape) {
  auto impl = std::make_shared<TensorImpl>();
  const auto n = numel_of(shape);
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<std::size_t>(n), 0.0f);
  return wrap_impl(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  auto t = zeros(std::move(shape));
  for (auto& v : t.impl()->data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data) {
  const auto n = numel_of(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return wrap_impl(std::move(impl));
}

Tensor Tensor::param(std::vector<int> shape, std::vector<float> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->grad.assign(impl_->data.size(), 0.0f);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::memset(impl_->grad.data(), 0, impl_->grad.size() * sizeof(float));
}

Tensor Tensor::clone() const {
  Tensor t = from(impl_->shape, impl_->data);
  if (impl_->requires_grad) t.set_requires_grad(true);
  return t;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(),
                     a.values().size() * sizeof(float)) == 0;
}

void check_finite(std::span<const float> v, const char* what) {
  // Exponent-mask test; vectorizes and catches both NaN and Inf.
  const auto* bits = reinterpret_cast<const std::uint32_t*>(v.data());
  std::uint32_t bad = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    bad |= static_cast<std::uint32_t>((bits[i] & 0x7f800000u) == 0x7f800000u);
  }
  if (bad) throw std::runtime_error(std::string(what) + ": non-finite value in output");
}

}  // namespace uc
