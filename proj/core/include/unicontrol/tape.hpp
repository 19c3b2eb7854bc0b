// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <vector>

#include "unicontrol/tensor.hpp"

namespace uc {

enum class OpKind {
  Conv2d,      // in: x, w, b        i0=stride i1=pad
  Linear,      // in: x, w, b
  SiLU,        // in: x
  ChannelNorm, // in: x, gamma, beta
  Add,         // in: a, b (same shape)
  AddChan,     // in: x [C,H,W], b [C]
  AddScalar,   // in: x, s [1]
  Mul,         // in: a, b (same shape)
  MulChan,     // in: x [C,H,W], m [C]
  MulScalar,   // in: x, s [1]
  Upsample2x,  // in: x
  AvgPool2x,   // in: x
  Mse,         // in: x, y
};

struct TapeNode {
  OpKind kind;
  int i0 = 0;
  int i1 = 0;
  int nin = 0;
  std::array<std::shared_ptr<TensorImpl>, 3> in;
  std::shared_ptr<TensorImpl> out;
};

// Ordered record of primitive applications; enough to run reverse
// accumulation and to re-evaluate the forward pass in 64-bit for gradcheck.
class Tape {
 public:
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  const std::vector<TapeNode>& nodes() const { return nodes_; }

 private:
  friend class TapeScope;
  friend void backward(Tape&, const Tensor&);
  friend void record_node(TapeNode node);

  std::vector<TapeNode> nodes_;
  bool consumed_ = false;
};

// Installs a tape as the active recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();
void record_node(TapeNode node);

// Reverse accumulation: fills the grad slot of every requires_grad tensor
// reachable from `loss`. The tape is consumed; a second call without reset
// is an error.
void backward(Tape& tape, const Tensor& loss);

}  // namespace uc
