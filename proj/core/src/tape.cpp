// SPDX-License-Identifier: Apache-2.0
#include "unicontrol/tape.hpp"

#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kernels.hpp"

namespace uc {
namespace {

thread_local Tape* g_active = nullptr;

}  // namespace

TapeScope::TapeScope(Tape& tape) : prev_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = prev_; }

Tape* active_tape() { return g_active; }

void record_node(TapeNode node) {
  g_active->nodes_.push_back(std::move(node));
}

namespace {

using GradMap = std::unordered_map<TensorImpl*, std::vector<float>>;

std::vector<float>* find_grad(GradMap& grads, TensorImpl* t) {
  auto it = grads.find(t);
  return it == grads.end() ? nullptr : &it->second;
}

std::vector<float>& grad_buf(GradMap& grads, TensorImpl* t) {
  auto it = grads.find(t);
  if (it == grads.end()) {
    it = grads.emplace(t, std::vector<float>(t->data.size(), 0.0f)).first;
  }
  return it->second;
}

}  // namespace

void backward(Tape& tape, const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (tape.consumed_) {
    throw std::runtime_error("backward: tape already consumed; reset the graph before reusing it");
  }
  tape.consumed_ = true;

  std::unordered_set<TensorImpl*> produced;
  produced.reserve(tape.nodes_.size() * 2);
  for (const TapeNode& n : tape.nodes_) produced.insert(n.out.get());

  const auto needs_grad = [&](TensorImpl* t) {
    return t->requires_grad || produced.count(t) != 0;
  };

  GradMap grads;
  grads.reserve(tape.nodes_.size() * 2);
  grads.emplace(loss.impl(), std::vector<float>{1.0f});

  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    const TapeNode& node = *it;
    std::vector<float>* gy = find_grad(grads, node.out.get());
    if (!gy) continue;  // nothing flowed into this subgraph

    TensorImpl* a = node.in[0].get();
    TensorImpl* b = node.nin > 1 ? node.in[1].get() : nullptr;
    TensorImpl* c = node.nin > 2 ? node.in[2].get() : nullptr;
    const float* g = gy->data();

    switch (node.kind) {
      case OpKind::Conv2d: {
        const auto geom = kernels::conv_geom(a->shape[0], a->shape[1], a->shape[2],
                                             b->shape[0], b->shape[2], b->shape[3],
                                             node.i0, node.i1);
        float* gx = needs_grad(a) ? grad_buf(grads, a).data() : nullptr;
        float* gw = needs_grad(b) ? grad_buf(grads, b).data() : nullptr;
        float* gb = needs_grad(c) ? grad_buf(grads, c).data() : nullptr;
        kernels::conv2d_backward(a->data.data(), b->data.data(), g, geom, gx, gw, gb);
        break;
      }
      case OpKind::Linear: {
        float* gx = needs_grad(a) ? grad_buf(grads, a).data() : nullptr;
        float* gw = needs_grad(b) ? grad_buf(grads, b).data() : nullptr;
        float* gb = needs_grad(c) ? grad_buf(grads, c).data() : nullptr;
        kernels::linear_backward(a->data.data(), b->data.data(), g,
                                 b->shape[0], b->shape[1], gx, gw, gb);
        break;
      }
      case OpKind::SiLU: {
        if (needs_grad(a)) {
          kernels::silu_backward(a->data.data(), g, a->data.size(), grad_buf(grads, a).data());
        }
        break;
      }
      case OpKind::ChannelNorm: {
        float* gx = needs_grad(a) ? grad_buf(grads, a).data() : nullptr;
        float* gg = needs_grad(b) ? grad_buf(grads, b).data() : nullptr;
        float* gb = needs_grad(c) ? grad_buf(grads, c).data() : nullptr;
        kernels::channel_norm_backward(a->data.data(), b->data.data(), g,
                                       a->shape[0], a->shape[1] * a->shape[2], gx, gg, gb);
        break;
      }
      case OpKind::Add: {
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        }
        if (needs_grad(b)) {
          auto& gb = grad_buf(grads, b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
        }
        break;
      }
      case OpKind::AddChan: {
        const std::size_t hw = static_cast<std::size_t>(a->shape[1]) * a->shape[2];
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        }
        if (needs_grad(b)) {
          auto& gb = grad_buf(grads, b);
          for (int ci = 0; ci < a->shape[0]; ++ci) {
            float s = 0.0f;
            const float* src = g + ci * hw;
            for (std::size_t i = 0; i < hw; ++i) s += src[i];
            gb[static_cast<std::size_t>(ci)] += s;
          }
        }
        break;
      }
      case OpKind::AddScalar: {
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
        }
        if (needs_grad(b)) {
          float s = 0.0f;
          for (std::size_t i = 0; i < a->data.size(); ++i) s += g[i];
          grad_buf(grads, b)[0] += s;
        }
        break;
      }
      case OpKind::Mul: {
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * b->data[i];
        }
        if (needs_grad(b)) {
          auto& gb = grad_buf(grads, b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a->data[i];
        }
        break;
      }
      case OpKind::MulChan: {
        const std::size_t hw = static_cast<std::size_t>(a->shape[1]) * a->shape[2];
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (int ci = 0; ci < a->shape[0]; ++ci) {
            const float m = b->data[static_cast<std::size_t>(ci)];
            float* dst = gx.data() + ci * hw;
            const float* src = g + ci * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i] * m;
          }
        }
        if (needs_grad(b)) {
          auto& gb = grad_buf(grads, b);
          for (int ci = 0; ci < a->shape[0]; ++ci) {
            float s = 0.0f;
            const float* src = g + ci * hw;
            const float* av = a->data.data() + ci * hw;
            for (std::size_t i = 0; i < hw; ++i) s += src[i] * av[i];
            gb[static_cast<std::size_t>(ci)] += s;
          }
        }
        break;
      }
      case OpKind::MulScalar: {
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          const float m = b->data[0];
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * m;
        }
        if (needs_grad(b)) {
          float s = 0.0f;
          for (std::size_t i = 0; i < a->data.size(); ++i) s += g[i] * a->data[i];
          grad_buf(grads, b)[0] += s;
        }
        break;
      }
      case OpKind::Upsample2x: {
        if (needs_grad(a)) {
          kernels::upsample2x_backward(g, a->shape[0], a->shape[1], a->shape[2],
                                       grad_buf(grads, a).data());
        }
        break;
      }
      case OpKind::AvgPool2x: {
        if (needs_grad(a)) {
          kernels::avgpool2x_backward(g, a->shape[0], a->shape[1], a->shape[2],
                                      grad_buf(grads, a).data());
        }
        break;
      }
      case OpKind::Mse: {
        const float scale = 2.0f * g[0] / static_cast<float>(a->data.size());
        if (needs_grad(a)) {
          auto& gx = grad_buf(grads, a);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += scale * (a->data[i] - b->data[i]);
        }
        if (needs_grad(b)) {
          auto& gb = grad_buf(grads, b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= scale * (a->data[i] - b->data[i]);
        }
        break;
      }
    }
  }

  // Deposit accumulated grads on the requires_grad leaves.
  for (auto& [timpl, buf] : grads) {
    if (!timpl->requires_grad || produced.count(timpl)) continue;
    if (timpl->grad.empty()) timpl->grad.assign(timpl->data.size(), 0.0f);
    for (std::size_t i = 0; i < buf.size(); ++i) timpl->grad[i] += buf[i];
  }
}

}  // namespace uc
