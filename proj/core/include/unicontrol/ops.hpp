// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "unicontrol/tensor.hpp"

namespace uc {

// Differentiable primitives. Each evaluates forward, verifies the output is
// finite, and registers itself on the active tape (when one is installed).
//
// Shapes: x [Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int pad = 0);

// x [in], w [out,in], b [out] -> [out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor silu(const Tensor& x);

// Per-channel mean/variance normalization over spatial dims, learned
// scale/shift, eps 1e-5. x [C,H,W], gamma/beta [C].
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Elementwise add/mul. b may also be [C] (broadcast over the spatial dims of
// a [C,H,W] lhs) or [1] (broadcast scalar).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor upsample_nearest2x(const Tensor& x);
Tensor avgpool2x(const Tensor& x);

// Mean squared error over all elements -> scalar.
Tensor mse(const Tensor& x, const Tensor& y);

}  // namespace uc
