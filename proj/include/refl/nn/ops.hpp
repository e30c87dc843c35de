// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "refl/nn/autograd.hpp"

// Differentiable primitives. Feature maps are NCHW; row-batched vectors are
// [N, D]; scalars are shape {1}.
namespace refl::nn {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var square(const Var& x);
Var abs(const Var& x);
Var exp(const Var& x);
Var relu(const Var& x);
Var silu(const Var& x);
// Identity inside [0,1], clipped (zero gradient) outside.
Var clamp01(const Var& x);

// Reductions to shape {1}.
Var sum(const Var& x);
Var mean(const Var& x);
// Per-sample mean over all non-batch axes: [N, ...] -> [N].
Var mean_per_sample(const Var& x);

// x times a scalar variable s (shape {1}).
Var mul_scalar(const Var& x, const Var& s);
// Weighted sum of scalars: sum_i w_i * s_i.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

Var reshape(const Var& x, Shape shape);

// 2-D convolution, square kernel, zero padding. w: [O, C, k, k]; bias [O] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);
// x [N,C,H,W] + e [N,C] broadcast over space.
Var add_spatial_bias(const Var& x, const Var& e);
Var global_avg_pool(const Var& x);
// Unit-normalize along channels at each spatial location: x / sqrt(|x|^2 + eps^2).
Var normalize_channels(const Var& x, double eps);

// x [N, in], w [out, in], b [out] or undefined.
Var linear(const Var& x, const Var& w, const Var& b);
Var normalize_rows(const Var& x, double eps);
Var rowwise_dot(const Var& a, const Var& b);
Var concat_cols(std::span<const Var> parts);
// table [V, D] gathered at indices -> [N, D].
Var embedding(const Var& table, std::span<const int> indices);
// Rows [begin, end) along the leading axis.
Var slice_rows(const Var& x, int begin, int end);

// Orthonormal Haar low-low band per channel: [N,C,H,W] -> [N,C,H/2,W/2].
Var haar_ll(const Var& x);

// Mean over pairs of -log softmax([s_a, s_b])[winner]; winner 0 = a, 1 = b.
Var pairwise_ce(const Var& s_a, const Var& s_b, std::span<const int> winners);

// KL(softmax(theta) || softmax(base)) over the flattened tensor; base is constant.
Var softmax_kl(const Var& theta, const Tensor& base);

}  // namespace refl::nn
