// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/ops.hpp"

#include <stdexcept>
#include <string>

#include "kernels.hpp"
#include "unicontrol/tape.hpp"

namespace uc {
namespace {

void record(OpKind kind, std::initializer_list<Tensor> inputs, const Tensor& out,
            int i0 = 0, int i1 = 0) {
  Tape* t = active_tape();
  if (!t) return;
  TapeNode node;
  node.kind = kind;
  node.i0 = i0;
  node.i1 = i1;
  for (const Tensor& in : inputs) node.in[node.nin++] = in.handle();
  node.out = out.handle();
  record_node(std::move(node));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

bool propagate(std::initializer_list<Tensor> inputs) {
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
  if (kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(kernel.shape()));
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: stride must be >= 1 and pad >= 0");
  if (kernel.dim(1) != x.dim(0)) shape_error("conv2d", x, kernel);
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) shape_error("conv2d bias", bias, kernel);
  const auto g = kernels::conv_geom(x.dim(0), x.dim(1), x.dim(2), kernel.dim(0),
                                    kernel.dim(2), kernel.dim(3), stride, pad);
  if (g.ho <= 0 || g.wo <= 0) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                " does not fit input " + shape_str(x.shape()));
  }
  Tensor y = Tensor::zeros({g.cout, g.ho, g.wo});
  kernels::conv2d_forward(x.values().data(), kernel.values().data(), bias.values().data(), g,
                          y.values_mut().data());
  check_finite(y.values(), "conv2d");
  if (propagate({x, kernel, bias})) y.impl()->requires_grad = true;
  record(OpKind::Conv2d, {x, kernel, bias}, y, stride, pad);
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0)) shape_error("linear", x, w);
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) shape_error("linear bias", b, w);
  Tensor y = Tensor::zeros({w.dim(0)});
  kernels::linear_forward(x.values().data(), w.values().data(), b.values().data(),
                          w.dim(0), w.dim(1), y.values_mut().data());
  check_finite(y.values(), "linear");
  if (propagate({x, w, b})) y.impl()->requires_grad = true;
  record(OpKind::Linear, {x, w, b}, y);
  return y;
}

Tensor silu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  kernels::silu_forward(x.values().data(), static_cast<std::size_t>(x.numel()), y.values_mut().data());
  check_finite(y.values(), "silu");
  if (propagate({x})) y.impl()->requires_grad = true;
  record(OpKind::SiLU, {x}, y);
  return y;
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() != 3) throw std::invalid_argument("channel_norm: input must be [C,H,W], got " + shape_str(x.shape()));
  if (gamma.rank() != 1 || gamma.dim(0) != x.dim(0)) shape_error("channel_norm gamma", gamma, x);
  if (beta.rank() != 1 || beta.dim(0) != x.dim(0)) shape_error("channel_norm beta", beta, x);
  Tensor y = Tensor::zeros(x.shape());
  kernels::channel_norm_forward(x.values().data(), gamma.values().data(), beta.values().data(),
                                x.dim(0), x.dim(1) * x.dim(2), y.values_mut().data());
  check_finite(y.values(), "channel_norm");
  if (propagate({x, gamma, beta})) y.impl()->requires_grad = true;
  record(OpKind::ChannelNorm, {x, gamma, beta}, y);
  return y;
}

namespace {

enum class Broadcast { Same, Chan, Scalar };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.rank() == 1 && b.dim(0) == 1) return Broadcast::Scalar;
  if (a.rank() == 3 && b.rank() == 1 && b.dim(0) == a.dim(0)) return Broadcast::Chan;
  shape_error(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = classify("add", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto* out = y.values_mut().data();
  const auto* pa = a.values().data();
  const auto* pb = b.values().data();
  const std::size_t n = static_cast<std::size_t>(a.numel());
  switch (mode) {
    case Broadcast::Same:
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
      record(OpKind::Add, {a, b}, y);
      break;
    case Broadcast::Chan: {
      const std::size_t hw = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
      for (int c = 0; c < a.dim(0); ++c) {
        const float bv = pb[c];
        const float* src = pa + c * hw;
        float* dst = out + c * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
      }
      record(OpKind::AddChan, {a, b}, y);
      break;
    }
    case Broadcast::Scalar: {
      const float bv = pb[0];
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + bv;
      record(OpKind::AddScalar, {a, b}, y);
      break;
    }
  }
  check_finite(y.values(), "add");
  if (propagate({a, b})) y.impl()->requires_grad = true;
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = classify("mul", a, b);
  Tensor y = Tensor::zeros(a.shape());
  auto* out = y.values_mut().data();
  const auto* pa = a.values().data();
  const auto* pb = b.values().data();
  const std::size_t n = static_cast<std::size_t>(a.numel());
  switch (mode) {
    case Broadcast::Same:
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
      record(OpKind::Mul, {a, b}, y);
      break;
    case Broadcast::Chan: {
      const std::size_t hw = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
      for (int c = 0; c < a.dim(0); ++c) {
        const float bv = pb[c];
        const float* src = pa + c * hw;
        float* dst = out + c * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * bv;
      }
      record(OpKind::MulChan, {a, b}, y);
      break;
    }
    case Broadcast::Scalar: {
      const float bv = pb[0];
      for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * bv;
      record(OpKind::MulScalar, {a, b}, y);
      break;
    }
  }
  check_finite(y.values(), "mul");
  if (propagate({a, b})) y.impl()->requires_grad = true;
  return y;
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("upsample_nearest2x: input must be [C,H,W], got " + shape_str(x.shape()));
  Tensor y = Tensor::zeros({x.dim(0), x.dim(1) * 2, x.dim(2) * 2});
  kernels::upsample2x_forward(x.values().data(), x.dim(0), x.dim(1), x.dim(2), y.values_mut().data());
  check_finite(y.values(), "upsample_nearest2x");
  if (propagate({x})) y.impl()->requires_grad = true;
  record(OpKind::Upsample2x, {x}, y);
  return y;
}

Tensor avgpool2x(const Tensor& x) {
  if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2) {
    throw std::invalid_argument("avgpool2x: input must be [C,H,W] with even H,W, got " + shape_str(x.shape()));
  }
  Tensor y = Tensor::zeros({x.dim(0), x.dim(1) / 2, x.dim(2) / 2});
  kernels::avgpool2x_forward(x.values().data(), x.dim(0), x.dim(1), x.dim(2), y.values_mut().data());
  check_finite(y.values(), "avgpool2x");
  if (propagate({x})) y.impl()->requires_grad = true;
  record(OpKind::AvgPool2x, {x}, y);
  return y;
}

Tensor mse(const Tensor& x, const Tensor& y) {
  if (x.shape() != y.shape()) shape_error("mse", x, y);
  const float v = kernels::mse_forward(x.values().data(), y.values().data(),
                                       static_cast<std::size_t>(x.numel()));
  Tensor out = Tensor::scalar(v);
  check_finite(out.values(), "mse");
  if (propagate({x, y})) out.impl()->requires_grad = true;
  record(OpKind::Mse, {x, y}, out);
  return out;
}

}  // namespace uc
