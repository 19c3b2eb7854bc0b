// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uc {

struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // same length as data when requires_grad
};

std::int64_t numel_of(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Shaped array of 32-bit reals with an optional gradient slot. Cheap to copy
// (shared handle). Values are treated as immutable once a tensor has entered
// a recorded graph; the grad slot is the only mutable part after that.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float value);
  static Tensor ones(std::vector<int> shape) { return full(std::move(shape), 1.0f); }
  static Tensor from(std::vector<int> shape, std::vector<float> data);
  static Tensor scalar(float value) { return from({1}, {value}); }
  // Trainable leaf: requires_grad set, grad slot allocated and zeroed.
  static Tensor param(std::vector<int> shape, std::vector<float> data);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const float> values() const { return impl_->data; }
  // Mutable access for initialization; never mutate a tensor that has been
  // used in an active graph.
  std::span<float> values_mut() { return impl_->data; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> grad_mut() { return impl_->grad; }
  void zero_grad();

  // Deep copy of values; grad slot fresh (zeroed when requires_grad).
  Tensor clone() const;

  bool same_shape(const Tensor& other) const { return impl_->shape == other.impl_->shape; }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor wrap_impl(std::shared_ptr<TensorImpl>);
};

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl);

// True when shapes and payload bits agree exactly.
bool bits_equal(const Tensor& a, const Tensor& b);

// Throws if any value is NaN or infinite; `what` names the producing op.
void check_finite(std::span<const float> v, const char* what);

}  // namespace uc
