#pragma once

#include "framecast/tensor.hpp"

namespace framecast {

// Differentiable ops. Each op validates shapes/dtypes, computes its forward
// result, and (when the thread tape is recording and an input requires grad)
// pushes a backward closure onto the tape. Inputs are never mutated.
//
// Dtype rule: all tensor inputs of one call must share a dtype; the output
// matches it. f32 is the training dtype, f64 backs the numeric oracles.

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);

// a: [m,k], b: [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x: [N,M], b: [M]; adds b to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& b);

// x: [N,C,H,W], b: [C] or [1,C]; adds b[c] to every (n,:,h,w) location.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

// Cross-correlation conv. x: [N,Cin,H,W], w: [Cout,Cin,kh,kw].
// Output spatial size floor((H + 2*padding - kh)/stride) + 1; a kernel larger
// than the padded input is a dimension error.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride = 1, int padding = 0);

// Per-group normalization over (channels/groups, H, W) with per-channel affine.
// gamma/beta: [C]. C must be divisible by groups.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor silu(const Tensor& x);

// Mean squared error over all elements -> scalar (shape [1]).
Tensor mse(const Tensor& a, const Tensor& b);

// Sum of all elements -> scalar (shape [1]).
Tensor sum_all(const Tensor& x);

// Scaled dot-product self-attention over the H*W token grid, per head.
// q,k,v: [N,C,H,W], C divisible by heads. Softmax rows are max-subtracted.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

// Full block: 1x1-conv projections, attention_core, 1x1 output projection,
// residual add with x. wq/wk/wv/wo: [C,C,1,1].
Tensor self_attention(const Tensor& x, int heads, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv, const Tensor& wo);

// Spatial resampling on [N,C,H,W].
Tensor upsample_nearest2x(const Tensor& x);
Tensor avg_pool2x(const Tensor& x);  // H,W must be even

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1);

// Differentiable copy under a new shape (same element count).
Tensor reshape(const Tensor& x, Shape shape);

// Non-differentiating utilities.
Tensor clamp(const Tensor& x, double lo, double hi);
bool all_finite(const Tensor& x);

}  // namespace framecast
